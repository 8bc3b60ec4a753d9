#include <doctest.h>

#include <cmath>

#include "posegen/schedule.hpp"

using namespace posegen;

TEST_CASE("scaled-linear schedule at T=50") {
    const NoiseSchedule s = make_schedule(50, kProfileScaledLinear);
    CHECK(s.num_steps == 50);
    CHECK(s.cumulative_alpha.size() == 51);
    CHECK(s.per_step_alpha.size() == 50);
    CHECK(s.abar(0) == doctest::Approx(1.0).epsilon(1e-12));
    for (int t = 1; t <= 50; ++t) {
        CHECK(s.abar(t) < s.abar(t - 1));
        CHECK(s.abar(t) > 0.0);
    }
    // endpoint is deep in the noise regime
    CHECK(s.abar(50) < 0.05);
}

TEST_CASE("cumulative alpha equals the running product of per-step alphas") {
    for (const char* profile : {kProfileScaledLinear, kProfileLinearToy}) {
        const NoiseSchedule s = make_schedule(50, profile);
        double running = 1.0;
        for (int t = 1; t <= 50; ++t) {
            running *= s.alpha_step(t);
            CHECK(std::abs(s.abar(t) - running) < 1e-10);
        }
    }
}

TEST_CASE("single-step toy schedule") {
    const NoiseSchedule s = make_schedule(1, kProfileLinearToy);
    CHECK(s.cumulative_alpha.size() == 2);
    CHECK(s.abar(0) == 1.0);
    CHECK(s.abar(1) > 0.0);
    CHECK(s.abar(1) < 1.0);
}

TEST_CASE("full 1000-step schedule matches the brute-force beta product") {
    const NoiseSchedule s = make_schedule(1000, kProfileScaledLinear);
    // oracle: explicit running product over the 1000 per-step alphas of the
    // sqrt-linear beta grid
    const double s0 = std::sqrt(0.00085), s1 = std::sqrt(0.012);
    double running = 1.0;
    for (int i = 0; i < 1000; ++i) {
        const double b = s0 + (s1 - s0) * i / 999.0;
        running *= 1.0 - b * b;
    }
    CHECK(s.abar(1000) == doctest::Approx(running).epsilon(1e-12));
    CHECK(s.abar(1000) < 0.01);
}

TEST_CASE("schedule errors") {
    CHECK_THROWS_AS(make_schedule(50, "no-such-profile"), config_error);
    CHECK_THROWS_AS(make_schedule(1001, kProfileScaledLinear), range_error);
    CHECK_THROWS_AS(make_schedule(0, kProfileLinearToy), range_error);
}

TEST_CASE("add_noise mixes data and noise by the schedule") {
    const NoiseSchedule s = make_schedule(10, kProfileLinearToy);
    Tensor x0({4}, 1.0);
    Tensor eps({4}, -1.0);
    const Tensor z = add_noise(x0, eps, s, 3);
    const double expect = std::sqrt(s.abar(3)) - std::sqrt(1.0 - s.abar(3));
    for (double v : z.data) CHECK(v == doctest::Approx(expect).epsilon(1e-14));
    CHECK_THROWS_AS(add_noise(x0, eps, s, 0), range_error);
    CHECK_THROWS_AS(add_noise(x0, eps, s, 11), range_error);
}
