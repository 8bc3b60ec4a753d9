#ifndef POSEGEN_DIFFUSION_HPP
#define POSEGEN_DIFFUSION_HPP

#include "posegen/schedule.hpp"
#include "posegen/tensor.hpp"

namespace posegen {

using Latent = Tensor;

// Knobs of the optimization and sampling stages. Defaults are the working
// configuration of the whole pipeline at T=50.
struct GuidanceConfig {
    double guidance_scale = 7.5;      // omega
    double base_step_size = 10.0;     // delta
    double background_weight = 100.0; // lambda2
    double keypoint_weight = 2000.0;  // lambda3
    double generalization_weight = 1.0;  // lambda1
    int num_augmented = 16;           // M
    double null_lr = 0.01;
    int null_iters = 50;
    double gen_lr = 0.1;
    int gen_iters = 100;

    // behavior switches, not part of the core math
    bool use_adam = false;        // plain gradient descent by default
    bool warm_start = true;       // carry embeddings across timesteps
    bool full_backprop = false;   // guidance gradient through the denoiser
    double cost_floor = 1e-8;     // skip guidance below this cost
    int workers = 1;
};

// omega*eps_cond + (1-omega)*eps_uncond
Latent cfg_epsilon(const Latent& eps_cond, const Latent& eps_uncond, double guidance_scale);

// One deterministic inversion step, level t -> t+1 (t in 0..T-1):
//   z_{t+1} = sqrt(abar_{t+1}/abar_t)*z_t
//           + sqrt(abar_{t+1})*(sqrt(1/abar_{t+1}-1) - sqrt(1/abar_t-1))*eps_hat
Latent ddim_invert_step(const Latent& z_t, const Latent& eps_hat, const NoiseSchedule& schedule, int t);

// One deterministic sampling step, level t -> t-1 (t in 1..T); exact inverse
// of ddim_invert_step for fixed eps_hat.
Latent ddim_sample_step(const Latent& z_t, const Latent& eps_hat, const NoiseSchedule& schedule, int t);

// Coefficients of the sampling step (z_{t-1} = z_coeff*z_t + eps_coeff*eps);
// optimizers differentiate through the step with these.
struct DdimCoeffs {
    double z_coeff;
    double eps_coeff;
};
DdimCoeffs ddim_sample_coeffs(const NoiseSchedule& schedule, int t);

// Clean-data estimate at level t in 1..T:
//   z_t/sqrt(abar_t) - (sqrt(1-abar_t)/sqrt(abar_t))*eps_hat
Latent tweedie_estimate(const Latent& z_t, const Latent& eps_hat, const NoiseSchedule& schedule, int t);

// Guided reverse step with dynamic step size:
//   z' = (1/sqrt(alpha_t))*(z_t - ((1-alpha_t)/sqrt(1-abar_t))*eps_hat)
//   returns z' - (delta/cost_value)*cost_gradient
// alpha_t is the per-step ratio abar_t/abar_{t-1}. No stochastic noise is added.
Latent guided_reverse_step(const Latent& z_t, const Latent& eps_hat, const Latent& cost_gradient,
                           double cost_value, const NoiseSchedule& schedule, int t,
                           const GuidanceConfig& config);

}  // namespace posegen

#endif
