#include "posegen/schedule.hpp"

#include <cmath>

namespace posegen {

namespace {

std::vector<double> train_grid_abar() {
    // betas linear in sqrt space, the grid common latent-diffusion
    // deployments train on
    const double beta_start = 0.00085;
    const double beta_end = 0.012;
    const double s0 = std::sqrt(beta_start);
    const double s1 = std::sqrt(beta_end);
    std::vector<double> abar(kTrainGridSize);
    double running = 1.0;
    for (int i = 0; i < kTrainGridSize; ++i) {
        const double s = s0 + (s1 - s0) * static_cast<double>(i) / static_cast<double>(kTrainGridSize - 1);
        const double beta = s * s;
        running *= (1.0 - beta);
        abar[i] = running;
    }
    return abar;
}

}  // namespace

NoiseSchedule make_schedule(int num_steps, const std::string& profile) {
    if (num_steps < 1) throw range_error("make_schedule: num_steps must be >= 1");

    NoiseSchedule s;
    s.num_steps = num_steps;
    s.profile = profile;
    s.cumulative_alpha.resize(static_cast<size_t>(num_steps) + 1);
    s.per_step_alpha.resize(static_cast<size_t>(num_steps));
    s.timestep_map.resize(static_cast<size_t>(num_steps));
    s.cumulative_alpha[0] = 1.0;

    if (profile == kProfileScaledLinear) {
        if (num_steps > kTrainGridSize)
            throw range_error("make_schedule: num_steps " + std::to_string(num_steps) +
                              " exceeds the " + std::to_string(kTrainGridSize) + "-step training grid");
        const std::vector<double> grid = train_grid_abar();
        const int step_ratio = kTrainGridSize / num_steps;
        for (int t = 1; t <= num_steps; ++t) {
            const int tau = (t - 1) * step_ratio;  // leading spacing
            s.timestep_map[t - 1] = tau;
            s.cumulative_alpha[t] = grid[tau];
        }
    } else if (profile == kProfileLinearToy) {
        const double abar_min = 0.05;
        for (int t = 1; t <= num_steps; ++t) {
            s.timestep_map[t - 1] = t - 1;
            s.cumulative_alpha[t] = 1.0 - (1.0 - abar_min) * static_cast<double>(t) / static_cast<double>(num_steps);
        }
    } else {
        throw config_error("make_schedule: unknown profile '" + profile + "'");
    }

    for (int t = 1; t <= num_steps; ++t) {
        s.per_step_alpha[t - 1] = s.cumulative_alpha[t] / s.cumulative_alpha[t - 1];
        if (!(s.cumulative_alpha[t] > 0.0) || !(s.cumulative_alpha[t] < s.cumulative_alpha[t - 1]))
            throw numerical_error("make_schedule: cumulative alpha not strictly decreasing and positive");
    }
    return s;
}

Tensor add_noise(const Tensor& x0, const Tensor& eps, const NoiseSchedule& schedule, int t) {
    if (t < 1 || t > schedule.num_steps) throw range_error("add_noise: t out of range");
    const double ab = schedule.abar(t);
    return lincomb(std::sqrt(ab), x0, std::sqrt(1.0 - ab), eps);
}

}  // namespace posegen
