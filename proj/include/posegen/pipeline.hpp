#ifndef POSEGEN_PIPELINE_HPP
#define POSEGEN_PIPELINE_HPP

#include <string>
#include <vector>

#include <json.hpp>

#include "posegen/compose.hpp"
#include "posegen/diffusion.hpp"
#include "posegen/metrics.hpp"
#include "posegen/toyworld.hpp"

namespace posegen {
namespace pipeline {

inline constexpr const char* kToolVersion = "0.1.0";

// Shared run configuration; file values are overridden by CLI flags.
struct RunConfig {
    std::string schedule_profile = kProfileScaledLinear;
    int steps = 50;
    GuidanceConfig guidance;
    AugmentationRanges ranges;
    uint64_t seed = 0;
};

RunConfig load_run_config(const std::string& path);
nlohmann::json run_config_json(const RunConfig& config);
// FNV-1a hex digest of the effective configuration plus command arguments.
std::string config_digest(const RunConfig& config, const std::string& command,
                          const nlohmann::json& args);

struct MakeAssetsOptions {
    std::string out_dir;
    int persons = 1;
    int canvas = 24;
    int frames = 8;
    uint64_t seed = 11;
};
// Writes toy person/background/pose files, a scene manifest, a driving pose
// sequence and a training-world spec.
void cmd_make_assets(const MakeAssetsOptions& opt);

struct ComposeOptions {
    std::string manifest;
    std::string out_dir;
    int augment = 16;
};
// Composes the reference scene plus M augmentations onto disk.
void cmd_compose(const RunConfig& config, const ComposeOptions& opt);

struct TrainToyOptions {
    std::string world_spec;
    std::string out_dir;
    ToyTrainingConfig training;
};
void cmd_train_toy(const RunConfig& config, const TrainToyOptions& opt);

struct InvertOptions {
    std::string compose_dir;
    std::string checkpoint;
    std::string out_dir;
    std::string mode = "generalizable";  // or "null"
};
void cmd_invert(const RunConfig& config, const InvertOptions& opt);

struct GenerateOptions {
    std::string compose_dir;
    std::string invert_dir;
    std::string checkpoint;
    std::string pose_sequence;
    std::string out_dir;
    int frames = -1;  // -1 = all
    bool no_guidance = false;
};
void cmd_generate(const RunConfig& config, const GenerateOptions& opt);

struct EvaluateOptions {
    std::string frames_dir;
    std::string reference_image;
    std::string pose_sequence;
    std::string report_path;
};
EvalReport cmd_evaluate(const RunConfig& config, const EvaluateOptions& opt);

// helpers shared with tests
std::vector<std::string> list_frame_files(const std::string& frames_dir);
ComposedScene load_composed_scene(const std::string& scene_dir, int* num_persons = nullptr);

}  // namespace pipeline
}  // namespace posegen

#endif
