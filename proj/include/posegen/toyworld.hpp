#ifndef POSEGEN_TOYWORLD_HPP
#define POSEGEN_TOYWORLD_HPP

#include <string>
#include <vector>

#include "posegen/compose.hpp"
#include "posegen/pose.hpp"
#include "posegen/toy_denoiser.hpp"

namespace posegen {
namespace toyworld {

// Desk-scale scene family: dark gradient backgrounds, persons drawn as
// capsule-limb blobs with one saturated marker disc per keypoint. Scene
// appearance (background style + person count) is keyed by a prompt string;
// placements and poses vary freely.

struct ToyWorldSpec {
    int canvas_w = 24;
    int canvas_h = 24;
    int num_backgrounds = 3;
    int max_persons = 2;
    int samples_per_family = 24;
    int embedding_dim = 32;
    uint64_t seed = 5;
};

// Prompt string shared by training and inference for a scene appearance.
std::string family_prompt(int background_style, int num_persons);

// Upright template skeleton of the given pixel height centered at (cx,cy).
PoseSkeleton canonical_pose(int canvas_w, int canvas_h, double height_px, double cx, double cy);

// Random joint-angle perturbation of a pose (subtree rotations about
// shoulders/elbows/hips/knees/neck); keypoints stay relative to the pose.
PoseSkeleton jiggle_pose(const PoseSkeleton& pose, Rng& rng, double strength = 1.0);

// Blob-person sprite on a transparent canvas; mask out-param marks coverage.
Image render_person_sprite(const PoseSkeleton& pose, int person_slot, int canvas_w, int canvas_h,
                           Tensor* mask);

Image render_background(int style, int w, int h);

// Fully assembled random scene spec for a family (random poses/placements).
SceneSpec random_scene(const ToyWorldSpec& world, int background_style, int num_persons, Rng& rng);

// Training triples drawn across every (background, person-count) family.
std::vector<TrainingExample> make_training_dataset(const ToyWorldSpec& world);

// Driving pose sequence derived from the reference scene poses: per frame,
// joint jiggle plus a small in-canvas translation. Frame 0 keeps the
// reference poses when `include_reference` is set.
PoseSequence make_driving_sequence(const std::vector<PoseSkeleton>& reference_poses, int n_frames,
                                   uint64_t seed, double strength = 1.0, bool include_reference = false);

// JSON (de)serialization of the world spec.
ToyWorldSpec load_world_spec(const std::string& path);
void save_world_spec(const ToyWorldSpec& spec, const std::string& path);

}  // namespace toyworld
}  // namespace posegen

#endif
