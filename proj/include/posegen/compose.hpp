#ifndef POSEGEN_COMPOSE_HPP
#define POSEGEN_COMPOSE_HPP

#include <string>
#include <vector>

#include "posegen/pose.hpp"
#include "posegen/tensor.hpp"

namespace posegen {

struct ScenePerson {
    Image foreground;  // canvas-sized (3,h,w)
    Tensor mask;       // (h,w), values in {0,1}
    PoseSkeleton base_pose;
    SimilarityTransform placement;
};

struct SceneSpec {
    Image background;
    std::vector<ScenePerson> persons;
    int canvas_w = 0;
    int canvas_h = 0;
    std::string prompt;
};

struct ComposedScene {
    Image image;
    std::vector<PoseSkeleton> poses;
    Tensor background_mask;             // (h,w), complement of the placed persons
    std::vector<Tensor> person_masks;   // visible (post-occlusion) masks, one per person
};

// Pastes each transformed foreground over the background in list order
// (painter's algorithm, nearest-neighbor warp, hard masks).
ComposedScene compose_scene(const SceneSpec& spec);

struct AugmentationRanges {
    double scale_lo = 0.8;
    double scale_hi = 1.2;
    double rotation_deg = 15.0;
    int max_attempts = 100;
};

// M augmented scenes: per person, the reference placement is perturbed by a
// random scale/rotation about the person's location and a translation drawn
// uniformly over the offsets that keep its visible keypoints in-canvas.
// Deterministic for a fixed seed.
std::vector<ComposedScene> generate_augmentations(const SceneSpec& spec, int count, uint64_t seed,
                                                  const AugmentationRanges& ranges = {});

// Scene manifest (JSON): canvas, optional prompt, background path, person
// entries (image/mask/pose paths + placement). Paths resolve relative to the
// manifest location.
SceneSpec load_scene_manifest(const std::string& path);
void save_scene_manifest(const SceneSpec& spec, const std::vector<std::string>& person_image_paths,
                         const std::vector<std::string>& person_mask_paths,
                         const std::vector<std::string>& person_pose_paths,
                         const std::string& background_path, const std::string& out_path);

}  // namespace posegen

#endif
