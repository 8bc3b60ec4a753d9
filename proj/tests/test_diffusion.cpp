#include <doctest.h>

#include <cmath>

#include "posegen/backends.hpp"
#include "posegen/diffusion.hpp"

using namespace posegen;

namespace {

Tensor random_tensor(Rng& rng, const std::vector<int>& shape, double scale = 1.0) {
    Tensor t(shape);
    for (double& v : t.data) v = scale * rng.normal();
    return t;
}

}  // namespace

TEST_CASE("cfg_epsilon basic identities") {
    Rng rng(1);
    const Tensor e = random_tensor(rng, {6});
    const Tensor e2 = random_tensor(rng, {6});
    // omega = 1 drops the unconditional branch
    CHECK(linf_distance(cfg_epsilon(e, e2, 1.0), e) == 0.0);
    // ones/zeros at omega 7.5
    const Tensor ones({6}, 1.0), zeros({6}, 0.0);
    const Tensor c = cfg_epsilon(ones, zeros, 7.5);
    for (double v : c.data) CHECK(v == doctest::Approx(7.5).epsilon(1e-15));
    // equal inputs cancel for any omega
    CHECK(linf_distance(cfg_epsilon(e, e, 3.3), e) < 1e-15);
    Tensor bad({5}, 0.0);
    CHECK_THROWS_AS(cfg_epsilon(e, bad, 1.0), contract_error);
}

TEST_CASE("cfg_epsilon is affine in the guidance scale") {
    Rng rng(2);
    const Tensor ec = random_tensor(rng, {8});
    const Tensor eu = random_tensor(rng, {8});
    const Tensor at0 = cfg_epsilon(ec, eu, 0.0);
    const Tensor at1 = cfg_epsilon(ec, eu, 1.0);
    const double w = 4.25;
    const Tensor predicted = lincomb(1.0 - w, at0, w, at1);
    CHECK(linf_distance(predicted, cfg_epsilon(ec, eu, w)) < 1e-12);
}

TEST_CASE("ddim invert step with zero noise prediction rescales") {
    const NoiseSchedule s = make_schedule(8, kProfileLinearToy);
    Rng rng(3);
    const Tensor z = random_tensor(rng, {5});
    const Tensor zero({5}, 0.0);
    const Tensor out = ddim_invert_step(z, zero, s, 2);
    const double a = std::sqrt(s.abar(3) / s.abar(2));
    for (size_t i = 0; i < z.data.size(); ++i)
        CHECK(out.data[i] == doctest::Approx(a * z.data[i]).epsilon(1e-14));
    CHECK_THROWS_AS(ddim_invert_step(z, zero, s, 8), range_error);
    CHECK_THROWS_AS(ddim_invert_step(z, zero, s, -1), range_error);
}

TEST_CASE("invert then sample with fixed eps is an exact round trip") {
    for (const char* profile : {kProfileScaledLinear, kProfileLinearToy}) {
        const NoiseSchedule s = make_schedule(50, profile);
        Rng rng(4);
        for (int rep = 0; rep < 20; ++rep) {
            const int t = rng.uniform_int(0, 49);
            const Tensor z = random_tensor(rng, {7}, 2.0);
            const Tensor eps = random_tensor(rng, {7});
            const Tensor up = ddim_invert_step(z, eps, s, t);
            const Tensor back = ddim_sample_step(up, eps, s, t + 1);
            CHECK(linf_distance(back, z) < 1e-10);
        }
    }
}

TEST_CASE("sample step degenerates when adjacent alphas are equal") {
    NoiseSchedule s = make_schedule(4, kProfileLinearToy);
    s.cumulative_alpha[3] = s.cumulative_alpha[4];  // hand-built degenerate step
    Rng rng(5);
    const Tensor z = random_tensor(rng, {6});
    const Tensor eps = random_tensor(rng, {6});
    CHECK(linf_distance(ddim_sample_step(z, eps, s, 4), z) < 1e-12);
}

TEST_CASE("tweedie inverts the forward noising identity") {
    const NoiseSchedule s = make_schedule(12, kProfileScaledLinear);
    Rng rng(6);
    const Tensor x0 = random_tensor(rng, {9});
    const Tensor eps = random_tensor(rng, {9});
    for (int t : {1, 5, 12}) {
        const Tensor z = add_noise(x0, eps, s, t);
        CHECK(linf_distance(tweedie_estimate(z, eps, s, t), x0) < 1e-12);
    }
    CHECK_THROWS_AS(tweedie_estimate(x0, eps, s, 0), range_error);
}

TEST_CASE("tweedie at abar=1 returns the latent unchanged") {
    NoiseSchedule s = make_schedule(3, kProfileLinearToy);
    s.cumulative_alpha[1] = 1.0;  // hand-built boundary
    Rng rng(7);
    const Tensor z = random_tensor(rng, {5});
    const Tensor eps = random_tensor(rng, {5}, 10.0);
    CHECK(linf_distance(tweedie_estimate(z, eps, s, 1), z) < 1e-12);
}

TEST_CASE("sample step equals the x0-parameterization identity") {
    const NoiseSchedule s = make_schedule(50, kProfileScaledLinear);
    Rng rng(8);
    for (int rep = 0; rep < 20; ++rep) {
        const int t = rng.uniform_int(1, 50);
        const Tensor z = random_tensor(rng, {7});
        const Tensor eps = random_tensor(rng, {7});
        const Tensor via_eps = ddim_sample_step(z, eps, s, t);
        const Tensor x0 = tweedie_estimate(z, eps, s, t);
        const double ab_prev = s.abar(t - 1);
        const Tensor via_x0 = lincomb(std::sqrt(ab_prev), x0, std::sqrt(1.0 - ab_prev), eps);
        CHECK(linf_distance(via_eps, via_x0) < 1e-10);
    }
}

TEST_CASE("guided reverse step") {
    const NoiseSchedule s = make_schedule(10, kProfileScaledLinear);
    GuidanceConfig config;
    Rng rng(9);
    const Tensor z = random_tensor(rng, {6});
    const Tensor eps = random_tensor(rng, {6});
    const Tensor zero;

    SUBCASE("zero gradient returns the base step exactly") {
        const Tensor base = guided_reverse_step(z, eps, zero, 0.0, s, 5, config);
        const double alpha = s.alpha_step(5);
        const double ab = s.abar(5);
        const Tensor expect = lincomb(1.0 / std::sqrt(alpha), z,
                                      -(1.0 - alpha) / (std::sqrt(alpha) * std::sqrt(1.0 - ab)), eps);
        CHECK(linf_distance(base, expect) == 0.0);
    }

    SUBCASE("delta=10 with cost 2 applies an effective step of 5") {
        const Tensor grad = random_tensor(rng, {6});
        const Tensor base = guided_reverse_step(z, eps, zero, 0.0, s, 5, config);
        const Tensor guided = guided_reverse_step(z, eps, grad, 2.0, s, 5, config);
        for (size_t i = 0; i < z.data.size(); ++i)
            CHECK(base.data[i] - guided.data[i] == doctest::Approx(5.0 * grad.data[i]).epsilon(1e-12));
    }

    SUBCASE("applied step size times cost equals delta") {
        Tensor grad({6}, 0.0);
        grad.data[2] = 1.0;
        const double cost = 3.7;
        const Tensor base = guided_reverse_step(z, eps, zero, 0.0, s, 4, config);
        const Tensor guided = guided_reverse_step(z, eps, grad, cost, s, 4, config);
        CHECK((base.data[2] - guided.data[2]) * cost == doctest::Approx(config.base_step_size).epsilon(1e-10));
    }

    SUBCASE("nonpositive cost with nonzero gradient is an error") {
        const Tensor grad = random_tensor(rng, {6});
        CHECK_THROWS_AS(guided_reverse_step(z, eps, grad, 0.0, s, 5, config), guidance_error);
        CHECK_THROWS_AS(guided_reverse_step(z, eps, grad, -1.0, s, 5, config), guidance_error);
    }
}

TEST_CASE("one guided step lowers a quadratic cost on the clean estimate") {
    // oracle: evaluate both branches directly
    const NoiseSchedule s = make_schedule(20, kProfileScaledLinear);
    GuidanceConfig config;
    Rng rng(10);
    const int t = 12;
    const Tensor z = random_tensor(rng, {8});
    const Tensor eps = random_tensor(rng, {8});
    Tensor target = random_tensor(rng, {8}, 3.0);

    auto cost_at = [&](const Tensor& lat, int level) {
        const Tensor x0 = tweedie_estimate(lat, eps, s, level);
        return squared_distance(x0, target);
    };
    const Tensor x0 = tweedie_estimate(z, eps, s, t);
    const double cost = squared_distance(x0, target);
    // d cost / d z = 2 (x0 - target) / sqrt(abar_t)
    const Tensor grad = scaled(lincomb(1.0, x0, -1.0, target), 2.0 / std::sqrt(s.abar(t)));

    const Tensor unguided = guided_reverse_step(z, eps, Tensor{}, 0.0, s, t, config);
    const Tensor guided = guided_reverse_step(z, eps, grad, cost, s, t, config);
    CHECK(cost_at(guided, t - 1) < cost_at(unguided, t - 1));
}

TEST_CASE("gaussian backend: tweedie equals the closed-form posterior mean") {
    const NoiseSchedule s = make_schedule(50, kProfileScaledLinear);
    Rng rng(11);
    GaussianWorldSpec world;
    world.mean = random_tensor(rng, {6});
    world.variance = 0.4;
    const AnalyticGaussianBackend backend(world, s);
    for (int rep = 0; rep < 10; ++rep) {
        const int t = rng.uniform_int(1, 50);
        const Tensor z = random_tensor(rng, {6}, 1.5);
        const Tensor eps = backend.predict(z, t, {}, nullptr);
        const Tensor tw = tweedie_estimate(z, eps, s, t);
        // oracle: gaussian conditioning, mean + g*(z - sqrt(abar)*mean)
        const double ab = s.abar(t);
        const double g = std::sqrt(ab) * world.variance / (ab * world.variance + 1.0 - ab);
        Tensor post(world.mean.shape);
        for (size_t i = 0; i < post.data.size(); ++i)
            post.data[i] = world.mean.data[i] + g * (z.data[i] - std::sqrt(ab) * world.mean.data[i]);
        CHECK(linf_distance(tw, post) < 1e-6);
    }
}

TEST_CASE("gaussian backend: deterministic denoising approaches the prior mean") {
    const NoiseSchedule s = make_schedule(50, kProfileScaledLinear);
    Rng rng(12);
    GaussianWorldSpec world;
    world.mean = random_tensor(rng, {4});
    world.variance = 1e-4;  // near-delta prior
    const AnalyticGaussianBackend backend(world, s);
    Tensor z = random_tensor(rng, {4}, 1.5);

    // oracle: iterate the same affine recursion in scalar closed form
    Tensor z_oracle = z;
    for (int t = 50; t >= 1; --t) {
        const Tensor eps = backend.predict(z, t, {}, nullptr);
        z = ddim_sample_step(z, eps, s, t);

        const double ab = s.abar(t);
        const double kappa = std::sqrt(1.0 - ab) / (ab * world.variance + 1.0 - ab);
        const DdimCoeffs c = ddim_sample_coeffs(s, t);
        // z' = (zc + ec*kappa) z - ec*kappa*sqrt(ab)*mean
        for (size_t i = 0; i < z_oracle.data.size(); ++i)
            z_oracle.data[i] = (c.z_coeff + c.eps_coeff * kappa) * z_oracle.data[i] -
                               c.eps_coeff * kappa * std::sqrt(ab) * world.mean.data[i];
    }
    CHECK(linf_distance(z, z_oracle) < 1e-9);
    CHECK(linf_distance(z, world.mean) < 0.05);
}
