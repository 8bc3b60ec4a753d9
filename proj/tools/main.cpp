#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "posegen/errors.hpp"
#include "posegen/pipeline.hpp"

namespace {

using posegen::pipeline::RunConfig;

// relative output paths resolve under POSEGEN_OUT_ROOT when set
std::string resolve_out(const std::string& path) {
    const char* root = std::getenv("POSEGEN_OUT_ROOT");
    if (!root || path.empty() || std::filesystem::path(path).is_absolute()) return path;
    return (std::filesystem::path(root) / path).string();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"posegen: pose-conditioned zero-shot image-to-video toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    uint64_t seed = 0;
    app.add_option("--config", config_path, "run configuration file (JSON)");
    auto* seed_opt = app.add_option("--seed", seed, "override the config seed");

    // make-assets
    posegen::pipeline::MakeAssetsOptions assets;
    auto* cmd_assets = app.add_subcommand("make-assets", "write a toy demo scene, poses and world spec");
    cmd_assets->add_option("--out", assets.out_dir, "output directory")->required();
    cmd_assets->add_option("--persons", assets.persons, "number of persons (1-3)");
    cmd_assets->add_option("--canvas", assets.canvas, "canvas size in pixels");
    cmd_assets->add_option("--frames", assets.frames, "driving sequence length");
    auto* assets_seed = cmd_assets->add_option("--asset-seed", assets.seed, "asset generation seed");

    // compose
    posegen::pipeline::ComposeOptions compose;
    auto* cmd_compose = app.add_subcommand("compose", "compose the reference scene and augmentations");
    cmd_compose->add_option("--manifest", compose.manifest, "scene manifest")->required();
    cmd_compose->add_option("--out", compose.out_dir, "output directory")->required();
    auto* aug_opt = cmd_compose->add_option("--augment", compose.augment, "number of augmented scenes");

    // train-toy
    posegen::pipeline::TrainToyOptions train;
    auto* cmd_train = app.add_subcommand("train-toy", "train the toy denoiser backend");
    cmd_train->add_option("--world", train.world_spec, "world spec file")->required();
    cmd_train->add_option("--out", train.out_dir, "output directory")->required();
    cmd_train->add_option("--train-steps", train.training.steps, "optimization steps");
    cmd_train->add_option("--batch", train.training.batch, "batch size");
    cmd_train->add_option("--lr", train.training.lr, "learning rate");

    // invert
    posegen::pipeline::InvertOptions invert;
    auto* cmd_invert = app.add_subcommand("invert", "pose-aware inversion and embedding optimization");
    cmd_invert->add_option("--compose", invert.compose_dir, "compose output directory")->required();
    cmd_invert->add_option("--checkpoint", invert.checkpoint, "backend checkpoint")->required();
    cmd_invert->add_option("--out", invert.out_dir, "output directory")->required();
    cmd_invert->add_option("--mode", invert.mode, "null | generalizable")
        ->check(CLI::IsMember({"null", "generalizable"}));

    // generate
    posegen::pipeline::GenerateOptions generate;
    auto* cmd_generate = app.add_subcommand("generate", "consistency-guided video generation");
    cmd_generate->add_option("--compose", generate.compose_dir, "compose output directory")->required();
    cmd_generate->add_option("--invert", generate.invert_dir, "invert output directory")->required();
    cmd_generate->add_option("--checkpoint", generate.checkpoint, "backend checkpoint")->required();
    cmd_generate->add_option("--poses", generate.pose_sequence, "driving pose sequence")->required();
    cmd_generate->add_option("--out", generate.out_dir, "output directory")->required();
    cmd_generate->add_option("--frames", generate.frames, "limit the number of frames");
    cmd_generate->add_flag("--no-guidance", generate.no_guidance, "disable consistency guidance");
    int workers = 0;
    auto* workers_opt = cmd_generate->add_option("--workers", workers, "frame-level worker threads");

    // evaluate
    posegen::pipeline::EvaluateOptions evaluate;
    auto* cmd_evaluate = app.add_subcommand("evaluate", "pose accuracy and similarity metrics");
    cmd_evaluate->add_option("--frames", evaluate.frames_dir, "generated frames directory")->required();
    cmd_evaluate->add_option("--reference", evaluate.reference_image, "reference image")->required();
    cmd_evaluate->add_option("--poses", evaluate.pose_sequence, "ground-truth pose sequence")->required();
    cmd_evaluate->add_option("--out", evaluate.report_path, "report file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig config = posegen::pipeline::load_run_config(config_path);
        if (seed_opt->count()) config.seed = seed;

        if (cmd_assets->parsed()) {
            if (!assets_seed->count()) assets.seed = config.seed + 11;
            assets.out_dir = resolve_out(assets.out_dir);
            posegen::pipeline::cmd_make_assets(assets);
        } else if (cmd_compose->parsed()) {
            if (!aug_opt->count()) compose.augment = config.guidance.num_augmented;
            compose.out_dir = resolve_out(compose.out_dir);
            posegen::pipeline::cmd_compose(config, compose);
        } else if (cmd_train->parsed()) {
            train.training.seed = config.seed + 1;
            train.out_dir = resolve_out(train.out_dir);
            posegen::pipeline::cmd_train_toy(config, train);
        } else if (cmd_invert->parsed()) {
            invert.out_dir = resolve_out(invert.out_dir);
            posegen::pipeline::cmd_invert(config, invert);
        } else if (cmd_generate->parsed()) {
            if (workers_opt->count()) config.guidance.workers = workers;
            generate.out_dir = resolve_out(generate.out_dir);
            posegen::pipeline::cmd_generate(config, generate);
        } else if (cmd_evaluate->parsed()) {
            evaluate.report_path = resolve_out(evaluate.report_path);
            const posegen::EvalReport report = posegen::pipeline::cmd_evaluate(config, evaluate);
            std::cout << "clip_i=" << report.clip_i << " dino=" << report.dino << " map=" << report.map
                      << " h=" << report.h << "\n";
        }
    } catch (const posegen::error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
