#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "cvp/reference/fd1d.hpp"
#include "cvp/rng.hpp"
#include "cvp/weakform.hpp"

using namespace cvp;

namespace {

ProblemSpec interval(double a = 1.0, double alpha = 1.0) {
    ProblemSpec s(Domain(Box{{-1.0}, {1.0}}));
    s.noise = NoiseParams{alpha, a, 1};
    s.allow_zero_amplitude = a == 0.0;
    return s;
}

GridFunction from_expression(const ProblemSpec& s, double hx, const Expression& u) {
    return GridFunction::sample(s.D, s.g, hx, [&](std::span<const double> x) { return u(x); });
}

// (Delta + Delta^{1/2}) u = -1 on (-1, 1), u = 0 outside, from the finite-difference oracle.
GridFunction fd_oracle_grid(const ProblemSpec& s, double h) {
    reference::Fd1dProblem pb;
    pb.f = Expression::constant(1.0, 1);
    const auto sol = reference::solve_fd1d(pb, h);
    return GridFunction::sample(s.D, s.g, h, [&](std::span<const double> x) { return sol(x[0]); });
}

ProblemSpec fd_spec() {
    ProblemSpec s = interval();
    s.f = Expression::constant(1.0, 1);
    return s;
}

}  // namespace

TEST(Weakform, ConstantCandidateHasZeroResidual) {
    for (int d : {1, 2}) {
        ProblemSpec s = d == 1 ? interval() : ProblemSpec(Domain(Ball{{0.0, 0.0}, 1.0}));
        s.noise = NoiseParams{1.3, 1.0, d};
        s.g = Expression::constant(3.0, d);
        const auto u = from_expression(s, d == 1 ? 1.0 / 128 : 1.0 / 32, Expression::constant(3.0, d));
        const auto suite = residual_suite(u, s, 5);
        ASSERT_EQ(suite.reports.size(), 5u);
        for (const auto& r : suite.reports) {
            EXPECT_NEAR(r.terms.gradient, 0.0, 1e-12);
            EXPECT_NEAR(r.terms.fractional, 0.0, 1e-6);
            EXPECT_NEAR(r.total, 0.0, 1e-6);
            EXPECT_EQ(r.total, r.terms.total());
        }
        EXPECT_TRUE(suite.pass);
    }
}

TEST(Weakform, ZeroCandidateLeavesSourceTerm) {
    ProblemSpec s = interval();
    s.f = parse("cos(3*x1) + x1", 1);
    const auto u = from_expression(s, 1.0 / 128, Expression::constant(0.0, 1));
    const BumpTestFunction phi{{0.1}, 0.5};
    const auto r = assemble_residual(u, phi, s);
    const double direct = integrate_panels(
        [&](double x) { return s.f(std::vector<double>{x}) * phi(std::vector<double>{x}); }, -0.4, 0.6, 64, 10);
    EXPECT_NEAR(r.total, -direct, 1e-8);
    EXPECT_NEAR(r.terms.f_term, -direct, 1e-8);
}

TEST(Weakform, NonlocalTermMatchesFourierReference) {
    // (A / 2) iint (u(x) - u(y))(phi(x) - phi(y)) / |x - y|^{1+alpha} with u = exp(-x^2) on R and phi the
    // bump at 0.2 of radius 0.4 equals (1 / 2 pi) int u^(xi) |xi|^alpha conj(phi^(xi)) dxi; reference values
    // from adaptive quadrature of that Fourier integral.
    const std::vector<std::pair<double, double>> reference{
        {0.5, 0.1579245672}, {1.0, 0.1764787251}, {1.5, 0.2189819064}};
    for (auto [alpha, expect] : reference) {
        ProblemSpec s = interval(1.0, alpha);
        s.g = parse("exp(-x1^2)", 1);
        const auto u = from_expression(s, 1.0 / 1024, s.g);
        const BumpTestFunction phi{{0.2}, 0.4};
        const auto r = assemble_residual(u, phi, s);
        EXPECT_NEAR(r.terms.fractional, expect, 1e-5 + r.tail_bound) << alpha;
        EXPECT_LE(std::abs(r.terms.fractional - expect), r.budget) << alpha;
    }
}

TEST(Weakform, ManufacturedCosineSolution) {
    // u = cos(<xi, x>) satisfies (Delta + a^alpha Delta^{alpha/2}) u + f = 0 with f = (|xi|^2 + a^alpha |xi|^alpha) u.
    for (int d : {1, 2}) {
        ProblemSpec s = d == 1 ? interval(1.5, 0.8) : ProblemSpec(Domain(Ball{{0.0, 0.0}, 1.0}));
        if (d == 2) s.noise = NoiseParams{1.2, 0.7, 2};
        const double a = s.noise.a, alpha = s.noise.alpha;
        const std::string phase = d == 1 ? "2*x1" : "1.2*x1 + 1.6*x2";
        const double k = 2.0;
        s.g = parse("cos(" + phase + ")", d);
        s.f = parse(std::to_string(k * k + std::pow(a, alpha) * std::pow(k, alpha)) + "*cos(" + phase + ")", d);
        const auto u = from_expression(s, d == 1 ? 1.0 / 512 : 1.0 / 48, s.g);
        const auto suite = residual_suite(u, s, d == 1 ? 5 : 3);
        for (const auto& r : suite.reports) {
            EXPECT_LE(std::abs(r.total), r.budget) << d;
            EXPECT_LT(r.budget, 0.02) << d;
        }
        EXPECT_TRUE(suite.pass);
    }
}

TEST(Weakform, PureDiffusionSolutionInTheDisk) {
    ProblemSpec s(Domain(Ball{{0.0, 0.0}, 1.0}));
    s.noise = NoiseParams{1.0, 0.0, 2};
    s.allow_zero_amplitude = true;
    s.f = Expression::constant(1.0, 2);
    const auto u = from_expression(s, 1.0 / 32, parse("(1 - x1^2 - x2^2)/4", 2));
    const auto suite = residual_suite(u, s, 4);
    for (const auto& r : suite.reports) EXPECT_NEAR(r.total, 0.0, 1e-6);
    EXPECT_TRUE(suite.pass);
}

TEST(Weakform, FiniteDifferenceOraclePassesAndCorruptionFails) {
    const ProblemSpec s = fd_spec();
    const auto u = fd_oracle_grid(s, 1.0 / 512);
    const auto good = residual_suite(u, s, 5);
    for (const auto& r : good.reports) EXPECT_LE(std::abs(r.total), r.budget) << r.center[0] << " " << r.radius;
    EXPECT_TRUE(good.pass);

    std::vector<double> v = u.values();
    for (std::size_t k = 0; k < v.size(); ++k) {
        const Point x = u.node(k);
        if (s.D.contains(x)) v[k] += 0.1 * x[0] * x[0];
    }
    const auto bad = residual_suite(u.with_values(v), s, 5);
    double worst = 0.0;
    for (const auto& r : bad.reports) worst = std::max(worst, std::abs(r.total) / r.budget);
    EXPECT_GE(worst, 5.0);
    EXPECT_FALSE(bad.pass);
}

TEST(Weakform, CorruptionInjectsTheLaplacianTerm) {
    // Adding 0.1 x1^2 inside D changes the gradient term by int 0.2 x1 phi' = -0.2 int phi.
    const ProblemSpec s = fd_spec();
    const auto u = fd_oracle_grid(s, 1.0 / 512);
    std::vector<double> v = u.values();
    for (std::size_t k = 0; k < v.size(); ++k) {
        const Point x = u.node(k);
        if (s.D.contains(x)) v[k] += 0.1 * x[0] * x[0];
    }
    const BumpTestFunction phi{{0.0}, 0.5};
    const auto r0 = assemble_residual(u, phi, s), r1 = assemble_residual(u.with_values(v), phi, s);
    EXPECT_NEAR(r1.terms.gradient - r0.terms.gradient, -0.2 * phi.mass(), 1e-6);
}

TEST(Weakform, ResidualIsLinearInTheCandidate) {
    ProblemSpec s = interval(1.0, 0.7);
    s.b = VectorExpression::parse({"sin(x1)"}, 1);
    s.c = parse("-x1^2", 1);
    s.b_hat = VectorExpression::parse({"0.3*x1"}, 1);
    RngStream rng(4, 0);
    const auto u1 = GridFunction::sample(s.D, s.g, 1.0 / 64, [&](std::span<const double>) { return rng.normal(); });
    const auto u2 = u1.with_values([&] {
        std::vector<double> v(u1.size());
        for (double& x : v) x = rng.normal();
        return v;
    }());
    std::vector<double> sum(u1.size());
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] = u1.values()[k] + u2.values()[k];
    const BumpTestFunction phi{{-0.1}, 0.4};
    WeakformOptions opt;
    opt.consistency = false;
    const double r1 = assemble_residual(u1, phi, s, opt).total, r2 = assemble_residual(u2, phi, s, opt).total;
    const double r12 = assemble_residual(u1.with_values(sum), phi, s, opt).total;
    EXPECT_NEAR(r12, r1 + r2, 1e-10 * (std::abs(r1) + std::abs(r2)));
}

TEST(Weakform, MonteCarloNoiseInflatesBudget) {
    const ProblemSpec s = fd_spec();
    const auto u = fd_oracle_grid(s, 1.0 / 128);
    RngStream rng(6, 0);
    const double se = 2e-3;
    std::vector<double> v = u.values(), e(u.size(), 0.0);
    for (std::size_t k = 0; k < v.size(); ++k)
        if (s.D.contains(u.node(k))) {
            v[k] += se * rng.normal();
            e[k] = se;
        }
    const auto noisy = u.with_values(v, e);
    const auto suite = residual_suite(noisy, s, 5);
    for (const auto& r : suite.reports) EXPECT_GT(r.mc_noise, 0.0);
    EXPECT_TRUE(suite.pass);
}

TEST(Weakform, RefinementReducesResidual) {
    const ProblemSpec s = fd_spec();
    const BumpTestFunction phi{{0.0}, 0.5};
    const double coarse = std::abs(assemble_residual(fd_oracle_grid(s, 1.0 / 128), phi, s).total);
    const double fine = std::abs(assemble_residual(fd_oracle_grid(s, 1.0 / 256), phi, s).total);
    EXPECT_GE(coarse / fine, 1.5);
}

TEST(Weakform, RefusesUnderResolvedBump) {
    const ProblemSpec s = fd_spec();
    const auto u = fd_oracle_grid(s, 1.0 / 16);
    EXPECT_THROW(assemble_residual(u, BumpTestFunction{{0.0}, 0.2}, s), ConfigError);
    EXPECT_THROW(assemble_residual(u, BumpTestFunction{{0.9}, 0.2}, s), ConfigError);
}
