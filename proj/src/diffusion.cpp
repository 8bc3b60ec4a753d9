#include "posegen/diffusion.hpp"

#include <cmath>

namespace posegen {

Latent cfg_epsilon(const Latent& eps_cond, const Latent& eps_uncond, double guidance_scale) {
    require_same_shape(eps_cond, eps_uncond, "cfg_epsilon");
    return lincomb(guidance_scale, eps_cond, 1.0 - guidance_scale, eps_uncond);
}

Latent ddim_invert_step(const Latent& z_t, const Latent& eps_hat, const NoiseSchedule& schedule, int t) {
    if (t < 0 || t >= schedule.num_steps) throw range_error("ddim_invert_step: t out of range");
    require_same_shape(z_t, eps_hat, "ddim_invert_step");
    const double ab_cur = schedule.abar(t);
    const double ab_next = schedule.abar(t + 1);
    const double a = std::sqrt(ab_next / ab_cur);
    const double b = std::sqrt(ab_next) * (std::sqrt(1.0 / ab_next - 1.0) - std::sqrt(1.0 / ab_cur - 1.0));
    Latent out = lincomb(a, z_t, b, eps_hat);
    out.timestep_tag = t + 1;
    return out;
}

DdimCoeffs ddim_sample_coeffs(const NoiseSchedule& schedule, int t) {
    if (t < 1 || t > schedule.num_steps) throw range_error("ddim_sample_coeffs: t out of range");
    const double ab_cur = schedule.abar(t);
    const double ab_prev = schedule.abar(t - 1);
    return {std::sqrt(ab_prev / ab_cur),
            std::sqrt(ab_prev) * (std::sqrt(1.0 / ab_prev - 1.0) - std::sqrt(1.0 / ab_cur - 1.0))};
}

Latent ddim_sample_step(const Latent& z_t, const Latent& eps_hat, const NoiseSchedule& schedule, int t) {
    require_same_shape(z_t, eps_hat, "ddim_sample_step");
    const DdimCoeffs c = ddim_sample_coeffs(schedule, t);
    Latent out = lincomb(c.z_coeff, z_t, c.eps_coeff, eps_hat);
    out.timestep_tag = t - 1;
    return out;
}

Latent tweedie_estimate(const Latent& z_t, const Latent& eps_hat, const NoiseSchedule& schedule, int t) {
    if (t < 1 || t > schedule.num_steps) throw range_error("tweedie_estimate: t out of range");
    require_same_shape(z_t, eps_hat, "tweedie_estimate");
    const double ab = schedule.abar(t);
    if (ab <= 0.0) throw numerical_error("tweedie_estimate: cumulative alpha is zero at t=" + std::to_string(t));
    const double inv = 1.0 / std::sqrt(ab);
    Latent out = lincomb(inv, z_t, -std::sqrt(1.0 - ab) * inv, eps_hat);
    out.timestep_tag = 0;
    return out;
}

Latent guided_reverse_step(const Latent& z_t, const Latent& eps_hat, const Latent& cost_gradient,
                           double cost_value, const NoiseSchedule& schedule, int t,
                           const GuidanceConfig& config) {
    if (t < 1 || t > schedule.num_steps) throw range_error("guided_reverse_step: t out of range");
    require_same_shape(z_t, eps_hat, "guided_reverse_step");
    const double alpha = schedule.alpha_step(t);
    const double ab = schedule.abar(t);
    Latent out = lincomb(1.0 / std::sqrt(alpha), z_t,
                         -(1.0 - alpha) / (std::sqrt(alpha) * std::sqrt(1.0 - ab)), eps_hat);
    const bool zero_grad = squared_norm(cost_gradient) == 0.0;
    if (!zero_grad) {
        require_same_shape(z_t, cost_gradient, "guided_reverse_step");
        if (cost_value <= 0.0)
            throw guidance_error("guided_reverse_step: nonpositive cost with nonzero gradient");
        axpy(-config.base_step_size / cost_value, cost_gradient, out);
    }
    out.timestep_tag = t - 1;
    return out;
}

}  // namespace posegen
