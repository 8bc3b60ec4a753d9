#ifndef POSEGEN_EMBEDDINGS_HPP
#define POSEGEN_EMBEDDINGS_HPP

#include <vector>

#include "posegen/compose.hpp"
#include "posegen/inversion.hpp"

namespace posegen {

// Reference trajectory plus the augmented trajectories that drive the
// generalization term. Every running latent starts from the reference
// inversion endpoint.
struct GeneralizationBatch {
    InversionTrajectory reference;
    std::vector<InversionTrajectory> augmented;
    Latent shared_start;  // == reference.latents[T]
};

GeneralizationBatch make_generalization_batch(InversionTrajectory reference,
                                              std::vector<InversionTrajectory> augmented);

// Per-scene pose-aware inversion of augmented scenes under their own control
// maps; errors carry the scene index.
std::vector<InversionTrajectory> invert_augmented(const std::vector<ComposedScene>& scenes,
                                                  const std::vector<double>& text_embedding,
                                                  const DenoiserBackend& backend,
                                                  const AutoencoderBackend& autoencoder,
                                                  const NoiseSchedule& schedule);

struct GeneralizableResult {
    TimestepEmbeddings embeddings;
    LossLog loss_log;  // joint objective per timestep
};

// Joint optimization of (unconditional, conditional) embeddings per timestep:
// reference pivot term plus the (lambda1/M)-weighted mean of the augmented
// pivot terms, each branch tracked by its own running latent updated with the
// optimized embeddings at the end of the timestep. null_init, when given,
// seeds the unconditional embeddings from a null-text run.
GeneralizableResult optimize_generalizable(const GeneralizationBatch& batch,
                                           const std::vector<double>& c_init,
                                           const DenoiserBackend& backend,
                                           const NoiseSchedule& schedule, const GuidanceConfig& config,
                                           const TimestepEmbeddings* null_init = nullptr);

}  // namespace posegen

#endif
