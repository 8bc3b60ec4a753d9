#ifndef POSEGEN_INVERSION_HPP
#define POSEGEN_INVERSION_HPP

#include <string>
#include <vector>

#include "posegen/backends.hpp"
#include "posegen/diffusion.hpp"

namespace posegen {

// Deterministic inversion trajectory z_0..z_T of a reference image under its
// control map and prompt embedding.
struct InversionTrajectory {
    std::vector<Latent> latents;  // indices 0..T
    ControlMap control;
    std::vector<double> text_embedding;
};

// The optimized artifact: per-timestep (unconditional, conditional) embedding
// pairs for t = 1..T, stored at index t-1.
struct TimestepEmbeddings {
    enum class Mode { null_only, generalizable };
    std::vector<std::vector<double>> unconditional;
    std::vector<std::vector<double>> conditional;
    int embedding_dim = 0;
    Mode mode = Mode::null_only;

    int steps() const { return static_cast<int>(unconditional.size()); }
    const std::vector<double>& uncond(int t) const { return unconditional[static_cast<size_t>(t - 1)]; }
    const std::vector<double>& cond(int t) const { return conditional[static_cast<size_t>(t - 1)]; }
};

struct StepLoss {
    int t = 0;
    double start = 0;
    double end = 0;
};
using LossLog = std::vector<StepLoss>;

struct NullTextResult {
    TimestepEmbeddings embeddings;
    LossLog loss_log;
};

// Conditional-only inversion (guidance weight 1): latents[k+1] solves the
// implicit invert step of latents[k] with the noise prediction evaluated at
// level k+1 (fixed-point per step), so conditional sampling retraces the
// trajectory exactly up to solver tolerance.
InversionTrajectory pose_aware_invert(const Image& x0, const std::vector<double>& text_embedding,
                                      const ControlMap& control, const DenoiserBackend& backend,
                                      const AutoencoderBackend& autoencoder,
                                      const NoiseSchedule& schedule);

// Classifier-free-guided sampling step from level t with per-branch control
// conditioning; shared by the optimizers and reconstruction.
Latent cfg_ddim_step(const Latent& z_hat, int t, const std::vector<double>& uncond,
                     const std::vector<double>& cond, const ControlMap& control,
                     const DenoiserBackend& backend, const NoiseSchedule& schedule,
                     double guidance_scale);

// Per-timestep unconditional-embedding optimization along the fixed pivot
// trajectory (timesteps T..1, warm-started, running latent updated with the
// optimized embeddings after each timestep).
NullTextResult optimize_null_text(const InversionTrajectory& traj, const DenoiserBackend& backend,
                                  const NoiseSchedule& schedule, const GuidanceConfig& config);

// CFG sampling loop from z_T with the given embeddings, then decode.
Image reconstruct(const Latent& z_T, const TimestepEmbeddings& embeddings, const ControlMap& control,
                  const DenoiserBackend& backend, const AutoencoderBackend& autoencoder,
                  const NoiseSchedule& schedule, const GuidanceConfig& config);

// Same loop without the final decode.
Latent reconstruct_latent(const Latent& z_T, const TimestepEmbeddings& embeddings,
                          const ControlMap& control, const DenoiserBackend& backend,
                          const NoiseSchedule& schedule, const GuidanceConfig& config);

// ---- embeddings file ----
// 32-byte header (magic, version, T, dim, mode) + T unconditional then T
// conditional float32 little-endian vectors. Contains no backend parameters.
void save_embeddings(const TimestepEmbeddings& embeddings, const std::string& path);
TimestepEmbeddings load_embeddings(const std::string& path);
// exact file size for a given (T, dim); useful for structural checks
size_t embeddings_file_size(int steps, int embedding_dim);

// ---- latent file (scene state, not part of the embeddings artifact) ----
void save_latent(const Latent& z, const std::string& path);
Latent load_latent(const std::string& path);

// machine-readable loss log (one JSON record per line)
void save_loss_log(const LossLog& log, const std::string& path);
LossLog load_loss_log(const std::string& path);

}  // namespace posegen

#endif
