#pragma once

// Finite-difference reference solver on an interval D = (lo, hi) for
//
//   u'' + a^alpha Delta^{alpha/2} u + b u' + (c + b_hat') u + f = 0 in D,  u = g off D,
//
// with smooth coefficients (b_hat' is taken symbolically). Used as an
// independent oracle for the Monte Carlo solver and the weak-form checker.
//
// Delta^{alpha/2} u(x_i) = A int_0^inf v(z) z^{-1-alpha} dz,  v(z) = u(x+z) + u(x-z) - 2u(x).
// With w = v / z^2 linear between lattice offsets z_m = m h (and w = w_1 on
// [0, h]), each piece integrates exactly against z^{1-alpha}. Beyond
// Z = (hi - lo) both x +- z lie off D, so the tail is -2 u_i Z^{-alpha} / alpha plus
// the g-integral, done by exp-sinh quadrature.

#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/exp_sinh.hpp>

#include "cvp/error.hpp"
#include "cvp/expr.hpp"
#include "cvp/kernels.hpp"

namespace cvp::reference {

struct Fd1dProblem {
    double lo = -1.0, hi = 1.0;
    double alpha = 1.0;
    double a = 1.0;
    bool diffusion = true;
    Expression b = Expression::constant(0.0, 1);
    Expression c = Expression::constant(0.0, 1);
    Expression b_hat = Expression::constant(0.0, 1);
    Expression f = Expression::constant(0.0, 1);
    Expression g = Expression::constant(0.0, 1);
};

struct Fd1dSolution {
    double lo = 0.0, h = 0.0;
    std::vector<double> x;  // nodes lo, lo + h, ..., hi
    std::vector<double> u;  // u at the nodes; end nodes carry g

    /// Piecewise-linear interpolation on [lo, hi].
    double operator()(double y) const {
        const double s = (y - lo) / h;
        if (s <= 0.0) return u.front();
        const auto n = u.size() - 1;
        if (s >= static_cast<double>(n)) return u.back();
        const auto i = static_cast<std::size_t>(s);
        const double t = s - static_cast<double>(i);
        return (1.0 - t) * u[i] + t * u[i + 1];
    }
};

namespace detail {

// Weights c_m (m = 1..M) with int_0^{Mh} w(z) z^{1-alpha} dz = sum_m c_m w_m.
inline std::vector<double> fractional_weights(double h, double alpha, std::size_t M) {
    const double e = 2.0 - alpha;
    auto P = [&](double z) { return std::pow(z, e) / e; };
    auto Q = [&](double z) { return std::pow(z, e + 1.0) / (e + 1.0); };
    std::vector<double> c(M + 1, 0.0);
    c[1] = P(h);
    for (std::size_t m = 1; m < M; ++m) {
        const double z0 = static_cast<double>(m) * h, z1 = z0 + h;
        const double dP = P(z1) - P(z0), dQ = Q(z1) - Q(z0);
        c[m] += (z1 * dP - dQ) / h;
        c[m + 1] += (dQ - z0 * dP) / h;
    }
    return c;
}

}  // namespace detail

/// Solves on a uniform grid with N = (hi - lo) / h intervals.
inline Fd1dSolution solve_fd1d(const Fd1dProblem& pb, double h) {
    if (!(pb.hi > pb.lo)) throw ConfigError("interval needs lo < hi");
    if (!(pb.alpha > 0.0 && pb.alpha < 2.0)) throw ConfigError("alpha must lie in (0, 2)");
    const double len = pb.hi - pb.lo;
    const auto N = static_cast<std::size_t>(std::llround(len / h));
    if (N < 4 || std::abs(static_cast<double>(N) * h - len) > 1e-9 * len) throw ConfigError("h must divide the interval");
    const std::size_t n = N - 1;  // unknowns at nodes 1..N-1
    const double A = pb.a > 0.0 ? std::pow(pb.a, pb.alpha) * frac_constant(1, pb.alpha) : 0.0;
    const std::size_t M = N;
    const std::vector<double> cw = detail::fractional_weights(h, pb.alpha, M);
    const double Z = static_cast<double>(M) * h;
    const Expression dbh = differentiate(pb.b_hat, 0);

    auto node = [&](long j) { return pb.lo + static_cast<double>(j) * h; };
    auto is_unknown = [&](long j) { return j >= 1 && j <= static_cast<long>(n); };
    auto gval = [&](double y) { return pb.g(std::vector<double>{y}); };
    const bool g_zero = pb.g.is_constant() && pb.g.constant_value() == 0.0;
    boost::math::quadrature::exp_sinh<double> tail_rule;

    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(static_cast<long>(n), static_cast<long>(n));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<long>(n));
    // Adds coef * u_j to row r (known values move to the right-hand side).
    auto add = [&](long r, long j, double coef) {
        if (is_unknown(j)) K(r, j - 1) += coef;
        else rhs(r) -= coef * gval(node(j));
    };

    for (long i = 1; i <= static_cast<long>(n); ++i) {
        const long r = i - 1;
        const double xi = node(i);
        const std::vector<double> xv{xi};
        if (pb.diffusion) {
            add(r, i - 1, 1.0 / (h * h));
            add(r, i, -2.0 / (h * h));
            add(r, i + 1, 1.0 / (h * h));
        }
        const double bv = pb.b(xv);
        if (bv != 0.0) {
            add(r, i + 1, bv / (2.0 * h));
            add(r, i - 1, -bv / (2.0 * h));
        }
        add(r, i, pb.c(xv) + dbh(xv));
        rhs(r) -= pb.f(xv);
        if (A > 0.0) {
            for (std::size_t m = 1; m <= M; ++m) {
                const double zm = static_cast<double>(m) * h;
                const double wc = A * cw[m] / (zm * zm);
                add(r, i + static_cast<long>(m), wc);
                add(r, i - static_cast<long>(m), wc);
                add(r, i, -2.0 * wc);
            }
            add(r, i, -2.0 * A * std::pow(Z, -pb.alpha) / pb.alpha);
            if (!g_zero) {
                const double gt = tail_rule.integrate([&](double s) {
                    const double z = Z + s;
                    return (gval(xi + z) + gval(xi - z)) * std::pow(z, -1.0 - pb.alpha);
                });
                rhs(r) -= A * gt;
            }
        }
    }
    const Eigen::VectorXd sol = K.partialPivLu().solve(rhs);
    Fd1dSolution out;
    out.lo = pb.lo;
    out.h = h;
    for (std::size_t j = 0; j <= N; ++j) {
        out.x.push_back(node(static_cast<long>(j)));
        out.u.push_back(j == 0 || j == N ? gval(out.x.back()) : sol(static_cast<long>(j) - 1));
    }
    return out;
}

}  // namespace cvp::reference
