#ifndef POSEGEN_SCHEDULE_HPP
#define POSEGEN_SCHEDULE_HPP

#include <string>
#include <vector>

#include "posegen/tensor.hpp"

namespace posegen {

// Noise-decay schedule over T sampler steps.
//
// cumulative_alpha has T+1 entries; index 0 is the clean data level (== 1)
// and index t is the noise level after t steps. per_step_alpha[i] is the
// ratio cumulative_alpha[i+1]/cumulative_alpha[i], i.e. the per-step alpha
// of sampler step i+1. timestep_map[i] is the underlying training timestep
// for sampler step i+1.
struct NoiseSchedule {
    int num_steps = 0;
    std::string profile;
    std::vector<double> per_step_alpha;    // size T,   per_step_alpha[t-1] = alpha_t
    std::vector<double> cumulative_alpha;  // size T+1, cumulative_alpha[0] = 1
    std::vector<int> timestep_map;         // size T

    // abar(t) for sampler level t in 0..T
    double abar(int t) const { return cumulative_alpha[static_cast<size_t>(t)]; }
    // per-step alpha of step t in 1..T (ratio abar(t)/abar(t-1))
    double alpha_step(int t) const { return per_step_alpha[static_cast<size_t>(t - 1)]; }
};

inline constexpr const char* kProfileScaledLinear = "scaled-linear-1000-subsampled";
inline constexpr const char* kProfileLinearToy = "linear-toy";

// Number of training timesteps behind the scaled-linear profile.
inline constexpr int kTrainGridSize = 1000;

// Builds a schedule. Profiles:
//  - "scaled-linear-1000-subsampled": 1000-step beta grid, linear in sqrt(beta)
//    between 0.00085 and 0.012, subsampled with leading spacing to num_steps.
//  - "linear-toy": cumulative alpha linear from 1 down to 0.05; handy for
//    closed-form tests.
NoiseSchedule make_schedule(int num_steps, const std::string& profile);

// z_t = sqrt(abar_t)*x0 + sqrt(1-abar_t)*eps for sampler level t in 1..T.
Tensor add_noise(const Tensor& x0, const Tensor& eps, const NoiseSchedule& schedule, int t);

}  // namespace posegen

#endif
