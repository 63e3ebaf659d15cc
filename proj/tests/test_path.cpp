#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "cvp/path.hpp"

using namespace cvp;

namespace {

ProcessSpec diffusion_only(int d) {
    ProcessSpec p;
    p.noise = NoiseParams{1.0, 0.0, d};
    p.drift = VectorExpression::zero(d);
    return p;
}

ProcessSpec stable_only(int d, double alpha, double a) {
    ProcessSpec p;
    p.noise = NoiseParams{alpha, a, d};
    p.drift = VectorExpression::zero(d);
    p.include_diffusion = false;
    return p;
}

PathConfig config(double dt) {
    PathConfig c;
    c.dt = dt;
    c.t_max = 50.0;
    return c;
}

double percentile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    return v[static_cast<std::size_t>(q * (v.size() - 1))];
}

}  // namespace

TEST(Path, ExitInvariant) {
    const Domain D(Ball{{0.0, 0.0}, 1.0});
    ProcessSpec p = diffusion_only(2);
    p.noise.a = 1.0;
    p.drift = VectorExpression::parse({"x2", "-x1"}, 2);
    const auto cfg = config(1e-3);
    for (std::uint64_t i = 0; i < 500; ++i) {
        RngStream rng(1, i);
        const auto s = simulate_to_exit(p, D, cfg, std::vector<double>{0.2, -0.3}, rng);
        ASSERT_FALSE(s.truncated);
        EXPECT_FALSE(D.contains(s.x_exit));
        EXPECT_GT(s.tau, 0.0);
    }
}

TEST(Path, TruncationIsFlagged) {
    const Domain D(Ball{{0.0}, 1.0});
    PathConfig cfg = config(1e-2);
    cfg.t_max = 0.05;
    RngStream rng(2, 0);
    const auto s = simulate_to_exit(diffusion_only(1), D, cfg, std::vector<double>{0.0}, rng);
    EXPECT_TRUE(s.truncated);
    EXPECT_LE(s.tau, cfg.t_max + 1e-15);
    EXPECT_TRUE(D.contains(s.x_exit));
}

TEST(Path, RejectsStartOutsideDomain) {
    const Domain D(Ball{{0.0}, 1.0});
    RngStream rng(3, 0);
    EXPECT_THROW(simulate_to_exit(diffusion_only(1), D, config(1e-3), std::vector<double>{1.0}, rng),
                 ConfigError);
}

TEST(Path, NonFiniteCoefficientReportsPosition) {
    const Domain D(Ball{{0.0}, 1.0});
    ProcessSpec p = diffusion_only(1);
    p.drift = VectorExpression::parse({"log(x1)"}, 1);
    RngStream rng(4, 0);
    try {
        simulate_to_exit(p, D, config(1e-3), std::vector<double>{-0.5}, rng);
        FAIL();
    } catch (const PathError& e) {
        EXPECT_DOUBLE_EQ(e.position()[0], -0.5);
    }
}

TEST(Path, DiffusionMeanExitTimeFromCentre) {
    // m(x) = (R^2 - |x|^2) / (2d) solves Delta m = -1, so E_0 tau = 1/4 in the unit disk.
    const Domain D(Ball{{0.0, 0.0}, 1.0});
    const auto e = estimate_mean_functional(diffusion_only(2), D, config(1e-4), std::vector<double>{0.0, 0.0},
                                            [](const ExitSample& s) { return s.tau; }, 10000, 5);
    EXPECT_NEAR(e.mean, 0.25, 3 * e.std_error + 0.01);
    EXPECT_EQ(e.truncation_fraction, 0.0);
}

TEST(Path, StableMeanExitTimeGetoor) {
    // E_0 tau = Gamma(d/2) / (2^alpha Gamma(1 + alpha/2) Gamma((d + alpha)/2)) (R^2)^{alpha/2} = 1.
    const double d = 1, alpha = 1;
    const double getoor = std::tgamma(d / 2) / (std::pow(2, alpha) * std::tgamma(1 + alpha / 2) * std::tgamma((d + alpha) / 2));
    ASSERT_NEAR(getoor, 1.0, 1e-14);
    const Domain D(Box{{-1.0}, {1.0}});
    const auto e = estimate_mean_functional(stable_only(1, 1.0, 1.0), D, config(1e-3), std::vector<double>{0.0},
                                            [](const ExitSample& s) { return s.tau; }, 10000, 6);
    EXPECT_NEAR(e.mean, 1.0, 3 * e.std_error + 0.03);
}

TEST(Path, ConstantPayoffIsExact) {
    const Domain D(Ball{{0.0, 0.0}, 1.0});
    const auto e = estimate_mean_functional(diffusion_only(2), D, config(1e-3), std::vector<double>{0.1, 0.1},
                                            [](const ExitSample&) { return 1.0; }, 100, 7);
    EXPECT_EQ(e.mean, 1.0);
    EXPECT_EQ(e.std_error, 0.0);
}

TEST(Path, SameSeedIsBitIdenticalForAnyThreadCount) {
    const Domain D(Box{{-1.0, -1.0}, {1.0, 1.0}});
    ProcessSpec p = stable_only(2, 1.2, 0.7);
    p.include_diffusion = true;
    auto tau = [](const ExitSample& s) { return s.tau + s.x_exit[0]; };
    const auto a = estimate_mean_functional(p, D, config(1e-3), std::vector<double>{0.0, 0.3}, tau, 300, 8, 1);
    const auto b = estimate_mean_functional(p, D, config(1e-3), std::vector<double>{0.0, 0.3}, tau, 300, 8, 4);
    const auto c = estimate_mean_functional(p, D, config(1e-3), std::vector<double>{0.0, 0.3}, tau, 300, 9, 1);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.std_error, b.std_error);
    EXPECT_NE(a.mean, c.mean);
}

TEST(Path, RecordedIntegralsAndWeightAreLeftEndpointSums) {
    const Domain D(Ball{{0.0}, 1.0});
    PathConfig cfg = config(1e-3);
    cfg.record = {[](std::span<const double>) { return 2.0; }};
    RngStream rng(10, 0);
    const auto s = simulate_to_exit(diffusion_only(1), D, cfg, std::vector<double>{0.0}, rng,
                                    [](std::span<const double>) { return -0.5; },
                                    [](std::span<const double>) { return 1.0; });
    EXPECT_NEAR(s.integrals[0], 2.0 * s.tau, 1e-12);
    EXPECT_NEAR(s.log_weight, -0.5 * s.tau, 1e-12);
    // int_0^tau e^{-s/2} ds up to the O(dt) left-endpoint error.
    EXPECT_NEAR(s.weighted_f_integral, 2.0 * (1.0 - std::exp(-0.5 * s.tau)), 1e-3);
}

TEST(Path, GaussianOvershootShrinksWithDt) {
    const Domain D(Ball{{0.0, 0.0}, 1.0});
    auto overshoot95 = [&](double dt) {
        std::vector<double> over;
        for (std::uint64_t i = 0; i < 3000; ++i) {
            RngStream rng(11, i);
            const auto s = simulate_to_exit(diffusion_only(2), D, config(dt), std::vector<double>{0.5, 0.0}, rng);
            EXPECT_GE(D.signed_distance(s.x_exit), 0.0);
            over.push_back(D.signed_distance(s.x_exit));
        }
        return percentile(over, 0.95);
    };
    const double coarse = overshoot95(4e-3), fine = overshoot95(1e-3);
    EXPECT_GE(coarse / fine, 1.3);
}

TEST(Path, JumpExitsLandFarFromBoundary) {
    const Domain D(Ball{{0.0, 0.0}, 1.0});
    ProcessSpec p = diffusion_only(2);
    p.noise = NoiseParams{1.0, 1.0, 2};
    int far = 0, jumps = 0;
    for (std::uint64_t i = 0; i < 2000; ++i) {
        RngStream rng(12, i);
        const auto s = simulate_to_exit(p, D, config(1e-3), std::vector<double>{0.0, 0.0}, rng);
        jumps += s.jump_exit ? 1 : 0;
        far += D.signed_distance(s.x_exit) > 0.1 ? 1 : 0;
    }
    EXPECT_GT(jumps, 0);
    EXPECT_GT(far, 0);
}

TEST(Path, DtRefinementConsistency) {
    // Exit-time bias is O(sqrt(dt)); fit its constant on (4dt, dt) and check (dt, dt/4).
    const Domain D(Ball{{0.0, 0.0}, 1.0});
    auto tau = [&](double dt) {
        return estimate_mean_functional(diffusion_only(2), D, config(dt), std::vector<double>{0.0, 0.0},
                                        [](const ExitSample& s) { return s.tau; }, 4000, 13);
    };
    const double dt = 1e-3;
    const auto e4 = tau(4 * dt), e1 = tau(dt), eq = tau(dt / 4);
    const double c = std::abs(e4.mean - e1.mean) / std::sqrt(dt);
    EXPECT_LE(std::abs(e1.mean - eq.mean), 3 * combined_stderr(e1, eq) + c * std::sqrt(dt));
}
