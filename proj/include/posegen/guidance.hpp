#ifndef POSEGEN_GUIDANCE_HPP
#define POSEGEN_GUIDANCE_HPP

#include <utility>
#include <vector>

#include "posegen/backends.hpp"
#include "posegen/inversion.hpp"
#include "posegen/pose.hpp"

namespace posegen {

// Reference-side inputs of the consistency costs.
struct ConsistencyTarget {
    Image reference_image;
    Tensor background_mask;  // (h,w)
    int keypoint_patch_radius = 1;
    std::vector<PoseSkeleton> reference_poses;
};

// Default patch radius: 1px at width 16, scaled proportionally (integer).
int default_patch_radius(int res_w);

// Sum of squared masked differences against the reference background.
double background_cost(const Image& estimate, const ConsistencyTarget& target);

// Copies the reference patch around each keypoint visible in both the
// reference and target pose to the target keypoint location. Overlaps resolve
// by later-person priority. Returns the assigned image (zero off-mask) and
// the keypoint mask.
std::pair<Image, Tensor> assign_keypoint_values(const ConsistencyTarget& target,
                                                const std::vector<PoseSkeleton>& target_poses);

double keypoint_cost(const Image& estimate, const Image& assigned, const Tensor& keypoint_mask);

// One frame of consistency-guided sampling: CFG prediction with per-timestep
// embeddings under the target control map, clean-image estimate via the
// Tweedie formula, image-space cost lambda2*bg + lambda3*kp, and a guided
// reverse step with dynamic step size delta/L. Guidance is skipped below the
// cost floor. final_cost, when non-null, receives the cost of the decoded
// output (same weights), also for unguided runs.
Image generate_frame(const Latent& start_latent, const TimestepEmbeddings& embeddings,
                     const std::vector<PoseSkeleton>& target_poses, const ConsistencyTarget& target,
                     const DenoiserBackend& backend, const AutoencoderBackend& autoencoder,
                     const NoiseSchedule& schedule, const GuidanceConfig& config,
                     bool guidance_enabled = true, double* final_cost = nullptr);

struct FrameJob {
    PoseSequence target_poses;  // one skeleton list per frame
    Latent start_latent;        // the reference inversion endpoint
    TimestepEmbeddings embeddings;
    GuidanceConfig config;
    bool guidance_enabled = true;
};

// Maps generate_frame over the job's frames; frames are independent and all
// start from the same latent. Per-frame errors carry the frame index.
std::vector<Image> generate_video(const FrameJob& job, const ConsistencyTarget& target,
                                  const DenoiserBackend& backend,
                                  const AutoencoderBackend& autoencoder,
                                  const NoiseSchedule& schedule,
                                  std::vector<double>* final_costs = nullptr);

}  // namespace posegen

#endif
