#pragma once

// Exact-in-law increments of the driving noise.
//
// Normalization conventions, used by every other module:
//   * the generator Delta gives Gaussian increments with variance 2*dt per coordinate,
//     so E exp(i<xi, W_t>) = exp(-t |xi|^2);
//   * the generator a^alpha Delta^{alpha/2} gives increments a * W_S, with S a
//     one-sided (alpha/2)-stable subordinator increment, E exp(-lambda S) =
//     exp(-dt lambda^{alpha/2}); hence E exp(i<xi, dX>) = exp(-dt a^alpha |xi|^alpha).

#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include "cvp/error.hpp"
#include "cvp/rng.hpp"

namespace cvp {

struct NoiseParams {
    double alpha = 1.0;  // in (0, 2)
    double a = 1.0;      // jump amplitude, >= 0
    int d = 1;

    void validate() const {
        if (!(alpha > 0.0 && alpha < 2.0)) throw ConfigError("alpha must lie in (0, 2)");
        if (!(a >= 0.0)) throw ConfigError("jump amplitude a must be non-negative");
        if (d < 1) throw ConfigError("dimension must be positive");
    }
};

inline void sample_gaussian_increment(double dt, RngStream& rng, std::span<double> out) {
    const double sd = std::sqrt(2.0 * dt);
    for (double& v : out) v = sd * rng.normal();
}

inline std::vector<double> sample_gaussian_increment(double dt, int d, RngStream& rng) {
    std::vector<double> out(static_cast<std::size_t>(d));
    sample_gaussian_increment(dt, rng, out);
    return out;
}

/// Positive stable increment S with E exp(-lambda S) = exp(-dt lambda^beta),
/// 0 < beta < 1, by Kanter's representation of the Chambers-Mallows-Stuck sampler:
///   S_1 = sin(beta U) / sin(U)^{1/beta} * (sin((1-beta) U) / E)^{(1-beta)/beta},
/// U ~ Uniform(0, pi), E ~ Exp(1), and S_dt = dt^{1/beta} S_1.
inline double sample_subordinator_increment(double beta, double dt, RngStream& rng) {
    const double u = std::numbers::pi * rng.uniform();
    const double e = rng.exponential();
    const double log_s = std::log(std::sin(beta * u)) - std::log(std::sin(u)) / beta +
                         (1.0 - beta) / beta * (std::log(std::sin((1.0 - beta) * u)) - std::log(e)) +
                         std::log(dt) / beta;
    return std::exp(log_s);
}

/// Isotropic increment with characteristic function exp(-dt a^alpha |xi|^alpha),
/// sampled by subordination a * W_S. Zero when a == 0.
inline void sample_stable_increment(const NoiseParams& p, double dt, RngStream& rng, std::span<double> out) {
    if (p.a == 0.0) {
        for (double& v : out) v = 0.0;
        return;
    }
    const double s = sample_subordinator_increment(0.5 * p.alpha, dt, rng);
    const double sd = p.a * std::sqrt(2.0 * s);
    for (double& v : out) v = sd * rng.normal();
}

inline std::vector<double> sample_stable_increment(const NoiseParams& p, double dt, RngStream& rng) {
    std::vector<double> out(static_cast<std::size_t>(p.d));
    sample_stable_increment(p, dt, rng, out);
    return out;
}

struct CharfnEstimate {
    double re = 0.0, im = 0.0;
    double re_stderr = 0.0, im_stderr = 0.0;
};

/// Sampler writes one draw of a d-vector into its output span.
using VectorSampler = std::function<void(RngStream&, std::span<double>)>;

/// Monte Carlo estimate of E exp(i <xi, X>) from n draws.
inline CharfnEstimate empirical_charfn(const VectorSampler& sampler, std::span<const double> xi,
                                       std::size_t n, RngStream& rng) {
    if (n < 2) throw ConfigError("empirical_charfn needs at least two samples");
    std::vector<double> x(xi.size());
    double sc = 0, ss = 0, sc2 = 0, ss2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sampler(rng, x);
        double phase = 0.0;
        for (std::size_t j = 0; j < xi.size(); ++j) phase += xi[j] * x[j];
        const double c = std::cos(phase), s = std::sin(phase);
        sc += c;
        ss += s;
        sc2 += c * c;
        ss2 += s * s;
    }
    const double nn = static_cast<double>(n);
    CharfnEstimate r;
    r.re = sc / nn;
    r.im = ss / nn;
    r.re_stderr = std::sqrt(std::max(0.0, (sc2 / nn - r.re * r.re) / (nn - 1.0)));
    r.im_stderr = std::sqrt(std::max(0.0, (ss2 / nn - r.im * r.im) / (nn - 1.0)));
    return r;
}

/// Analytic characteristic function of one increment of
/// (include_gaussian ? Delta : 0) + a^alpha Delta^{alpha/2} over dt.
inline double analytic_charfn(const NoiseParams& p, double dt, double xi_norm, bool include_gaussian) {
    double expo = dt * std::pow(p.a, p.alpha) * std::pow(xi_norm, p.alpha);
    if (include_gaussian) expo += dt * xi_norm * xi_norm;
    return std::exp(-expo);
}

}  // namespace cvp
