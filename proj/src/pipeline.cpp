#include "posegen/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "posegen/embeddings.hpp"
#include "posegen/guidance.hpp"
#include "posegen/image_io.hpp"
#include "posegen/inversion.hpp"
#include "posegen/toy_denoiser.hpp"

namespace posegen {
namespace pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

RunConfig load_run_config(const std::string& path) {
    RunConfig config;
    if (path.empty()) return config;
    std::ifstream f(path);
    if (!f) throw io_error("cannot open config file: " + path);
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw io_error("malformed config file " + path + ": " + e.what());
    }
    config.schedule_profile = j.value("schedule_profile", config.schedule_profile);
    config.steps = j.value("steps", config.steps);
    config.seed = j.value("seed", config.seed);
    if (j.contains("guidance")) {
        const json& g = j["guidance"];
        GuidanceConfig& gc = config.guidance;
        gc.guidance_scale = g.value("scale", gc.guidance_scale);
        gc.base_step_size = g.value("base_step", gc.base_step_size);
        gc.background_weight = g.value("bg_weight", gc.background_weight);
        gc.keypoint_weight = g.value("kp_weight", gc.keypoint_weight);
        gc.generalization_weight = g.value("gen_weight", gc.generalization_weight);
        gc.num_augmented = g.value("augmented", gc.num_augmented);
        gc.null_lr = g.value("null_lr", gc.null_lr);
        gc.null_iters = g.value("null_iters", gc.null_iters);
        gc.gen_lr = g.value("gen_lr", gc.gen_lr);
        gc.gen_iters = g.value("gen_iters", gc.gen_iters);
        gc.use_adam = g.value("use_adam", gc.use_adam);
        gc.warm_start = g.value("warm_start", gc.warm_start);
        gc.full_backprop = g.value("full_backprop", gc.full_backprop);
        gc.workers = g.value("workers", gc.workers);
    }
    if (j.contains("augmentation")) {
        const json& a = j["augmentation"];
        config.ranges.scale_lo = a.value("scale_lo", config.ranges.scale_lo);
        config.ranges.scale_hi = a.value("scale_hi", config.ranges.scale_hi);
        config.ranges.rotation_deg = a.value("rotation_deg", config.ranges.rotation_deg);
        config.ranges.max_attempts = a.value("max_attempts", config.ranges.max_attempts);
    }
    return config;
}

json run_config_json(const RunConfig& config) {
    const GuidanceConfig& g = config.guidance;
    return json{
        {"schedule_profile", config.schedule_profile},
        {"steps", config.steps},
        {"seed", config.seed},
        {"guidance",
         {{"scale", g.guidance_scale},
          {"base_step", g.base_step_size},
          {"bg_weight", g.background_weight},
          {"kp_weight", g.keypoint_weight},
          {"gen_weight", g.generalization_weight},
          {"augmented", g.num_augmented},
          {"null_lr", g.null_lr},
          {"null_iters", g.null_iters},
          {"gen_lr", g.gen_lr},
          {"gen_iters", g.gen_iters},
          {"use_adam", g.use_adam},
          {"warm_start", g.warm_start},
          {"full_backprop", g.full_backprop},
          {"workers", g.workers}}},
        {"augmentation",
         {{"scale_lo", config.ranges.scale_lo},
          {"scale_hi", config.ranges.scale_hi},
          {"rotation_deg", config.ranges.rotation_deg},
          {"max_attempts", config.ranges.max_attempts}}},
    };
}

std::string config_digest(const RunConfig& config, const std::string& command, const json& args) {
    const json j = {{"config", run_config_json(config)}, {"command", command}, {"args", args}};
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(j.dump())));
    return std::string(buf);
}

namespace {

void write_manifest(const std::string& out_dir, const RunConfig& config, const std::string& command,
                    const json& args, json extra) {
    extra["tool"] = "posegen";
    extra["version"] = kToolVersion;
    extra["command"] = command;
    extra["config_digest"] = config_digest(config, command, args);
    extra["seed"] = config.seed;
    std::ofstream f(out_dir + "/manifest.json");
    if (!f) throw io_error("cannot write manifest in " + out_dir);
    f << extra.dump(1) << "\n";
}

void write_scene_dir(const ComposedScene& scene, int canvas_w, int canvas_h, const std::string& dir) {
    fs::create_directories(dir);
    save_image_ppm(scene.image, dir + "/image.ppm");
    PoseSequence seq;
    seq.frames.push_back(scene.poses);
    save_pose_sequence(seq, canvas_w, canvas_h, dir + "/poses.json");
    save_mask_pgm(scene.background_mask, dir + "/background_mask.pgm");
    for (size_t i = 0; i < scene.person_masks.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "/person_%02zu_mask.pgm", i);
        save_mask_pgm(scene.person_masks[i], dir + name);
    }
}

std::string compose_prompt(const std::string& compose_dir) {
    std::ifstream f(compose_dir + "/manifest.json");
    if (!f) throw io_error("cannot open compose manifest in " + compose_dir);
    json j;
    f >> j;
    return j.value("prompt", std::string{});
}

}  // namespace

ComposedScene load_composed_scene(const std::string& scene_dir, int* num_persons) {
    ComposedScene scene;
    scene.image = load_image_ppm(scene_dir + "/image.ppm");
    const PoseSequence seq = load_pose_sequence(scene_dir + "/poses.json");
    if (seq.frames.empty()) throw io_error("scene poses file is empty in " + scene_dir);
    scene.poses = seq.frames[0];
    scene.background_mask = load_mask_pgm(scene_dir + "/background_mask.pgm");
    for (size_t i = 0; i < scene.poses.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "/person_%02zu_mask.pgm", i);
        scene.person_masks.push_back(load_mask_pgm(scene_dir + name));
    }
    if (num_persons) *num_persons = static_cast<int>(scene.poses.size());
    return scene;
}

void cmd_make_assets(const MakeAssetsOptions& opt) {
    if (opt.persons < 1 || opt.persons > kMaxMarkerPersons)
        throw config_error("make-assets: persons must be in 1.." + std::to_string(kMaxMarkerPersons));
    fs::create_directories(opt.out_dir);
    const int C = opt.canvas;

    toyworld::ToyWorldSpec world;
    world.canvas_w = world.canvas_h = C;
    world.max_persons = std::max(2, opt.persons);
    world.seed = opt.seed;
    toyworld::save_world_spec(world, opt.out_dir + "/world.json");

    save_image_ppm(toyworld::render_background(0, C, C), opt.out_dir + "/background.ppm");

    SceneSpec spec;
    spec.canvas_w = spec.canvas_h = C;
    spec.prompt = toyworld::family_prompt(0, opt.persons);
    spec.background = toyworld::render_background(0, C, C);
    Rng rng(opt.seed);
    std::vector<std::string> img_paths, mask_paths, pose_paths;
    for (int p = 0; p < opt.persons; ++p) {
        const double height = (16.0 - 2.0 * p) * C / 24.0;
        const double cx = (C - 1.0) / 2.0;
        PoseSkeleton pose = toyworld::canonical_pose(C, C, height, cx, (C - 1.0) / 2.0);
        pose = toyworld::jiggle_pose(pose, rng, 0.5);
        pose.person_id = p;
        ScenePerson person;
        person.base_pose = pose;
        person.foreground = toyworld::render_person_sprite(pose, p, C, C, &person.mask);
        person.placement.pivot_x = cx;
        person.placement.pivot_y = (C - 1.0) / 2.0;
        // spread multiple persons horizontally
        person.placement.dx = opt.persons > 1 ? (p == 0 ? -0.18 * C : 0.18 * C) : 0.0;

        char stem[32];
        std::snprintf(stem, sizeof(stem), "person%d", p);
        save_image_ppm(person.foreground, opt.out_dir + "/" + stem + ".ppm");
        save_mask_pgm(person.mask, opt.out_dir + "/" + stem + "_mask.pgm");
        PoseSequence pseq;
        pseq.frames.push_back({pose});
        save_pose_sequence(pseq, C, C, opt.out_dir + "/" + stem + "_pose.json");
        img_paths.push_back(std::string(stem) + ".ppm");
        mask_paths.push_back(std::string(stem) + "_mask.pgm");
        pose_paths.push_back(std::string(stem) + "_pose.json");
        spec.persons.push_back(std::move(person));
    }
    save_scene_manifest(spec, img_paths, mask_paths, pose_paths, "background.ppm",
                        opt.out_dir + "/scene.json");

    const ComposedScene reference = compose_scene(spec);
    const PoseSequence drive =
        toyworld::make_driving_sequence(reference.poses, opt.frames, opt.seed + 1);
    save_pose_sequence(drive, C, C, opt.out_dir + "/drive.json");
}

void cmd_compose(const RunConfig& config, const ComposeOptions& opt) {
    const SceneSpec spec = load_scene_manifest(opt.manifest);
    const ComposedScene reference = compose_scene(spec);
    const std::vector<ComposedScene> augs =
        generate_augmentations(spec, opt.augment, config.seed, config.ranges);

    fs::create_directories(opt.out_dir);
    write_scene_dir(reference, spec.canvas_w, spec.canvas_h, opt.out_dir + "/reference");
    for (int m = 0; m < opt.augment; ++m) {
        char name[32];
        std::snprintf(name, sizeof(name), "/aug_%03d", m);
        write_scene_dir(augs[static_cast<size_t>(m)], spec.canvas_w, spec.canvas_h, opt.out_dir + name);
    }
    write_manifest(opt.out_dir, config, "compose",
                   {{"manifest", opt.manifest}, {"augment", opt.augment}},
                   {{"augment", opt.augment},
                    {"prompt", spec.prompt},
                    {"canvas", {spec.canvas_w, spec.canvas_h}},
                    {"persons", spec.persons.size()}});
}

void cmd_train_toy(const RunConfig& config, const TrainToyOptions& opt) {
    const toyworld::ToyWorldSpec world = toyworld::load_world_spec(opt.world_spec);
    const NoiseSchedule schedule = make_schedule(config.steps, config.schedule_profile);
    const std::vector<TrainingExample> dataset = toyworld::make_training_dataset(world);
    const ToyTrainResult result = train_toy_denoiser(dataset, schedule, opt.training);

    fs::create_directories(opt.out_dir);
    result.backend->save_checkpoint(opt.out_dir + "/backend.ckpt");
    {
        std::ofstream f(opt.out_dir + "/train_log.jsonl");
        for (size_t i = 0; i < result.epoch_losses.size(); ++i)
            f << json{{"epoch", i}, {"loss", result.epoch_losses[i]}}.dump() << "\n";
    }
    write_manifest(opt.out_dir, config, "train-toy",
                   {{"world", opt.world_spec},
                    {"steps", opt.training.steps},
                    {"batch", opt.training.batch},
                    {"lr", opt.training.lr},
                    {"train_seed", opt.training.seed}},
                   {{"dataset_size", dataset.size()},
                    {"initial_loss", result.epoch_losses.front()},
                    {"final_loss", result.epoch_losses.back()}});
}

void cmd_invert(const RunConfig& config, const InvertOptions& opt) {
    if (opt.mode != "null" && opt.mode != "generalizable")
        throw config_error("invert: mode must be 'null' or 'generalizable'");
    const NoiseSchedule schedule = make_schedule(config.steps, config.schedule_profile);
    const auto backend = ToyDenoiser::load_checkpoint(opt.checkpoint);
    if (backend->schedule().profile != schedule.profile ||
        backend->schedule().num_steps != schedule.num_steps)
        throw config_error("invert: checkpoint schedule does not match the configured schedule");

    const ComposedScene reference = load_composed_scene(opt.compose_dir + "/reference");
    const std::vector<int> lshape = backend->latent_shape();
    if (reference.image.shape != lshape)
        throw config_error("invert: scene resolution " + shape_str(reference.image.shape) +
                           " does not match backend latent " + shape_str(lshape));
    const std::string prompt = compose_prompt(opt.compose_dir);
    const std::vector<double> c = backend->embed_text(prompt);
    const ControlMap control = rasterize_pose(reference.poses, lshape[2], lshape[1]);
    const IdentityCodec codec;

    const InversionTrajectory traj =
        pose_aware_invert(reference.image, c, control, *backend, codec, schedule);

    TimestepEmbeddings embeddings;
    LossLog log;
    if (opt.mode == "null") {
        NullTextResult res = optimize_null_text(traj, *backend, schedule, config.guidance);
        embeddings = std::move(res.embeddings);
        log = std::move(res.loss_log);
    } else {
        const int M = config.guidance.num_augmented;
        std::vector<ComposedScene> scenes;
        for (int m = 0; m < M; ++m) {
            char name[32];
            std::snprintf(name, sizeof(name), "/aug_%03d", m);
            const std::string dir = opt.compose_dir + name;
            if (!fs::exists(dir + "/image.ppm"))
                throw config_error("invert: missing augmentation " + dir +
                                   " (run compose with --augment >= " + std::to_string(M) + ")");
            scenes.push_back(load_composed_scene(dir));
        }
        const std::vector<InversionTrajectory> aug_trajs =
            invert_augmented(scenes, c, *backend, codec, schedule);
        const GeneralizationBatch batch = make_generalization_batch(traj, aug_trajs);
        GeneralizableResult res =
            optimize_generalizable(batch, c, *backend, schedule, config.guidance);
        embeddings = std::move(res.embeddings);
        log = std::move(res.loss_log);
    }

    fs::create_directories(opt.out_dir);
    save_embeddings(embeddings, opt.out_dir + "/embeddings.bin");
    save_latent(traj.latents.back(), opt.out_dir + "/start_latent.bin");
    save_loss_log(log, opt.out_dir + "/loss_log.jsonl");
    write_manifest(opt.out_dir, config, "invert",
                   {{"compose", opt.compose_dir}, {"checkpoint", opt.checkpoint}, {"mode", opt.mode}},
                   {{"mode", opt.mode == "null" ? "null-only" : "generalizable"},
                    {"embedding_dim", embeddings.embedding_dim},
                    {"timesteps", embeddings.steps()}});
}

void cmd_generate(const RunConfig& config, const GenerateOptions& opt) {
    const NoiseSchedule schedule = make_schedule(config.steps, config.schedule_profile);
    const auto backend = ToyDenoiser::load_checkpoint(opt.checkpoint);
    const ComposedScene reference = load_composed_scene(opt.compose_dir + "/reference");
    const IdentityCodec codec;

    FrameJob job;
    job.embeddings = load_embeddings(opt.invert_dir + "/embeddings.bin");
    job.start_latent = load_latent(opt.invert_dir + "/start_latent.bin");
    job.config = config.guidance;
    job.guidance_enabled = !opt.no_guidance;
    job.target_poses = load_pose_sequence(opt.pose_sequence);
    if (opt.frames >= 0 && static_cast<size_t>(opt.frames) < job.target_poses.frames.size())
        job.target_poses.frames.resize(static_cast<size_t>(opt.frames));

    ConsistencyTarget target;
    target.reference_image = reference.image;
    target.background_mask = reference.background_mask;
    target.keypoint_patch_radius = default_patch_radius(reference.image.shape[2]);
    target.reference_poses = reference.poses;

    std::vector<double> final_costs;
    const std::vector<Image> frames =
        generate_video(job, target, *backend, codec, schedule, &final_costs);

    fs::create_directories(opt.out_dir);
    for (size_t f = 0; f < frames.size(); ++f) {
        char name[32];
        std::snprintf(name, sizeof(name), "/frame_%03zu.ppm", f);
        save_image_ppm(frames[f], opt.out_dir + name);
    }
    json costs = json::array();
    for (double cost : final_costs) costs.push_back(cost);
    write_manifest(opt.out_dir, config, "generate",
                   {{"compose", opt.compose_dir},
                    {"invert", opt.invert_dir},
                    {"poses", opt.pose_sequence},
                    {"frames", opt.frames},
                    {"no_guidance", opt.no_guidance}},
                   {{"frames", frames.size()},
                    {"fps", job.target_poses.fps ? json(*job.target_poses.fps) : json()},
                    {"delta", config.guidance.base_step_size},
                    {"lambda2", config.guidance.background_weight},
                    {"lambda3", config.guidance.keypoint_weight},
                    {"guidance", job.guidance_enabled},
                    {"final_costs", costs}});
}

std::vector<std::string> list_frame_files(const std::string& frames_dir) {
    std::vector<std::string> files;
    if (!fs::is_directory(frames_dir)) throw io_error("not a directory: " + frames_dir);
    for (const auto& entry : fs::directory_iterator(frames_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("frame_", 0) == 0 && entry.path().extension() == ".ppm")
            files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    return files;
}

EvalReport cmd_evaluate(const RunConfig& config, const EvaluateOptions& opt) {
    const std::vector<std::string> files = list_frame_files(opt.frames_dir);
    std::vector<Image> frames;
    for (const auto& f : files) frames.push_back(load_image_ppm(f));
    const Image reference = load_image_ppm(opt.reference_image);
    const PoseSequence gt = load_pose_sequence(opt.pose_sequence);
    if (frames.size() != gt.frames.size())
        throw contract_error("evaluate: " + std::to_string(frames.size()) + " frames vs " +
                             std::to_string(gt.frames.size()) + " pose frames");

    const PixelEmbedder clip_like(8);
    const RandomProjectionEmbedder dino_like(64);
    const EvalReport report = evaluate(
        frames, reference, gt,
        [](const Image& img, int expected) { return detect_toy_keypoints(img, expected); }, clip_like,
        dino_like, default_oks_params());

    if (!opt.report_path.empty()) {
        const std::string digest = config_digest(
            config, "evaluate",
            {{"frames", opt.frames_dir}, {"reference", opt.reference_image}, {"poses", opt.pose_sequence}});
        save_eval_report(report, digest, opt.report_path);
    }
    return report;
}

}  // namespace pipeline
}  // namespace posegen
