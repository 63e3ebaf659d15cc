#pragma once

// Split-step simulation of X = drift + Gaussian (generator Delta) + isotropic
// alpha-stable jumps (generator a^alpha Delta^{alpha/2}) from a start point until
// it leaves D.
//
// Each step of length h:
//   1. x += b(x) h + N(0, 2h I); exit check
//   2. x += stable increment over h; exit check
// tau is the accumulated time at the first failing check. A jump exit keeps the
// landing point, which may lie deep inside D^c. Path integrals and the running
// log-weight use left-endpoint values.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cvp/domain.hpp"
#include "cvp/error.hpp"
#include "cvp/estimate.hpp"
#include "cvp/expr.hpp"
#include "cvp/parallel.hpp"
#include "cvp/rng.hpp"
#include "cvp/stable.hpp"

namespace cvp {

using ScalarField = std::function<double(std::span<const double>)>;

/// A non-finite coefficient value met along a path.
class PathError : public NumericalError {
public:
    PathError(const std::string& what, Point position)
        : NumericalError(what + " at x = " + format_point(position)), position_(std::move(position)) {}

    const Point& position() const noexcept { return position_; }

    static std::string format_point(const Point& x) {
        std::string s = "(";
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (i) s += ", ";
            s += std::to_string(x[i]);
        }
        return s + ")";
    }

private:
    Point position_;
};

struct ProcessSpec {
    NoiseParams noise;
    VectorExpression drift;       // b; only ever evaluated inside D
    bool include_diffusion = true;
    bool include_drift = true;
};

struct PathConfig {
    double dt = 1e-3;
    double dt_boundary_factor = 0.25;  // step shrink when |signed_distance| < sqrt(dt)
    double t_max = 100.0;
    std::vector<ScalarField> record;   // fields integrated along the path

    void validate() const {
        if (!(dt > 0.0)) throw ConfigError("dt must be positive");
        if (!(dt_boundary_factor > 0.0 && dt_boundary_factor <= 1.0))
            throw ConfigError("dt_boundary_factor must lie in (0, 1]");
        if (!(t_max >= dt)) throw ConfigError("t_max must be at least dt");
    }
};

struct ExitSample {
    Point x_exit;
    double tau = 0.0;
    std::vector<double> integrals;       // one per PathConfig::record entry
    double log_weight = 0.0;             // int_0^tau rate(X_s) ds
    double weighted_f_integral = 0.0;    // int_0^tau e(s) f(X_s) ds
    bool truncated = false;
    bool jump_exit = false;
};

/// Simulates one path from `start` (which must lie in D) to its exit.
/// `weight_rate` and `f` may be empty, meaning identically zero.
inline ExitSample simulate_to_exit(const ProcessSpec& proc, const Domain& D, const PathConfig& cfg,
                                   std::span<const double> start, RngStream& rng,
                                   const ScalarField& weight_rate = {}, const ScalarField& f = {}) {
    const auto d = static_cast<std::size_t>(D.dim());
    ExitSample out;
    out.x_exit.assign(start.begin(), start.end());
    out.integrals.assign(cfg.record.size(), 0.0);
    if (!D.contains(start)) throw ConfigError("path start point must lie inside D");

    Point& x = out.x_exit;
    std::vector<double> buf(d), drift(d);
    const bool use_drift = proc.include_drift && !proc.drift.is_zero();
    const bool use_jumps = proc.noise.a > 0.0;
    const double near = std::sqrt(cfg.dt);
    double t = 0.0;

    auto eval = [&](const ScalarField& fld, const char* name) {
        double v;
        try {
            v = fld(x);
        } catch (const EvalError& e) {
            throw PathError(e.what(), x);
        }
        if (!std::isfinite(v)) throw PathError(std::string("non-finite ") + name, x);
        return v;
    };

    for (;;) {
        if (t >= cfg.t_max) {
            out.truncated = true;
            out.tau = t;
            return out;
        }
        double h = std::abs(D.signed_distance(x)) < near ? cfg.dt * cfg.dt_boundary_factor : cfg.dt;
        h = std::min(h, cfg.t_max - t);

        // Left-endpoint contributions over [t, t + h].
        if (f) out.weighted_f_integral += std::exp(out.log_weight) * eval(f, "f") * h;
        if (weight_rate) out.log_weight += eval(weight_rate, "weight rate") * h;
        for (std::size_t r = 0; r < cfg.record.size(); ++r) out.integrals[r] += eval(cfg.record[r], "path field") * h;
        t += h;

        if (use_drift || proc.include_diffusion) {
            if (use_drift) {
                try {
                    proc.drift.evaluate(x, drift);
                } catch (const EvalError& e) {
                    throw PathError(e.what(), x);
                }
            }
            if (proc.include_diffusion) sample_gaussian_increment(h, rng, buf);
            for (std::size_t i = 0; i < d; ++i)
                x[i] += (use_drift ? drift[i] * h : 0.0) + (proc.include_diffusion ? buf[i] : 0.0);
            if (!D.contains(x)) break;
        }
        if (use_jumps) {
            sample_stable_increment(proc.noise, h, rng, buf);
            for (std::size_t i = 0; i < d; ++i) x[i] += buf[i];
            if (!D.contains(x)) {
                out.jump_exit = true;
                break;
            }
        }
    }
    out.tau = t;
    return out;
}

/// Mean of payoff(ExitSample) over n paths. Path i uses stream
/// (seed, stream_offset + i), so the result is bit-identical for any thread count.
inline Estimate estimate_mean_functional(const ProcessSpec& proc, const Domain& D, const PathConfig& cfg,
                                         std::span<const double> start,
                                         const std::function<double(const ExitSample&)>& payoff,
                                         std::size_t n, std::uint64_t seed, unsigned threads = 0,
                                         std::uint64_t stream_offset = 0,
                                         const ScalarField& weight_rate = {}, const ScalarField& f = {}) {
    if (n < 2) throw ConfigError("estimate_mean_functional needs n >= 2");
    cfg.validate();
    std::vector<double> values(n);
    std::vector<char> truncated(n);
    parallel_for(n, threads, [&](std::size_t i) {
        RngStream rng(seed, stream_offset + i);
        const ExitSample s = simulate_to_exit(proc, D, cfg, start, rng, weight_rate, f);
        values[i] = payoff(s);
        truncated[i] = s.truncated;
    });
    Estimate e = summarize(values);
    std::size_t nt = 0;
    for (char c : truncated) nt += c ? 1 : 0;
    e.truncation_fraction = static_cast<double>(nt) / static_cast<double>(n);
    return e;
}

}  // namespace cvp
