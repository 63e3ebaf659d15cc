#pragma once

// Monte Carlo solver for the complement value problem
//
//   (Delta + a^alpha Delta^{alpha/2} + b.grad + c + div b_hat) u + f = 0 in D,  u = g on D^c,
//
// through u_k(x) = E_x[e_k(tau) g(X_tau) + int_0^tau e_k(s) f(X_s) ds], where
// e_k(t) = exp(int_0^t (c_k + div b_hat_k)(X_s) ds) uses the mollified c and b_hat.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "cvp/domain.hpp"
#include "cvp/error.hpp"
#include "cvp/estimate.hpp"
#include "cvp/expr.hpp"
#include "cvp/mollify.hpp"
#include "cvp/parallel.hpp"
#include "cvp/path.hpp"
#include "cvp/quadrature.hpp"
#include "cvp/stable.hpp"

namespace cvp {

struct ProblemSpec {
    explicit ProblemSpec(Domain domain)
        : D(std::move(domain)),
          b(VectorExpression::zero(D.dim())),
          c(Expression::constant(0.0, D.dim())),
          b_hat(VectorExpression::zero(D.dim())),
          h(Expression::constant(0.0, D.dim())),
          f(Expression::constant(0.0, D.dim())),
          g(Expression::constant(0.0, D.dim())) {
        noise.d = D.dim();
    }

    Domain D;
    NoiseParams noise;  // alpha, a, d
    double p = 2.0;     // integrability exponent of the lower-order coefficients, > d/2
    VectorExpression b;
    Expression c;
    VectorExpression b_hat;
    Expression h;       // user-asserted majorant, c + div b_hat <= h, h >= 0
    Expression f;
    Expression g;       // evaluated on D^c
    Extension extension = Extension::Natural;  // continuation of c, b_hat, h off D
    bool allow_zero_amplitude = false;         // a = 0 runs the pure diffusion (validation only)

    int dim() const noexcept { return D.dim(); }

    void validate() const {
        const int d = dim();
        noise.validate();
        if (noise.d != d) throw ConfigError("noise dimension differs from the domain dimension");
        if (!(p > 0.5 * d)) throw ConfigError("p must exceed d/2");
        if (noise.a == 0.0 && !allow_zero_amplitude)
            throw ConfigError("a = 0 requires the explicit zero-amplitude validation flag");
        if (b.dim() != d || b_hat.dim() != d) throw ConfigError("vector coefficients must have d components");
        for (const Expression* e : {&c, &h, &f, &g})
            if (e->dim() != d) throw ConfigError("scalar coefficient dimension differs from d");
    }
};

struct SolveConfig {
    std::vector<int> k_ladder{2, 4, 8, 16};
    std::size_t n_paths = 10000;
    PathConfig path;
    std::uint64_t seed = 1;
    std::vector<Point> probe_points;
    double extrapolation_tol = 1e-2;
    int mollifier_points = 0;        // 0 picks the dimension default
    double rate_grid_spacing = -1.0; // < 0: automatic (direct in d = 1, lattice 1/(8k) otherwise); 0: direct
    double max_failure_fraction = 0.01;
    unsigned threads = 0;

    void validate(const Domain& D) const {
        path.validate();
        if (k_ladder.empty()) throw ConfigError("k_ladder must be non-empty");
        for (std::size_t i = 0; i < k_ladder.size(); ++i) {
            if (k_ladder[i] < 1) throw ConfigError("k_ladder entries must be >= 1");
            if (i > 0 && k_ladder[i] <= k_ladder[i - 1]) throw ConfigError("k_ladder must be strictly increasing");
        }
        if (n_paths < 2) throw ConfigError("n_paths must be at least 2");
        if (!(extrapolation_tol > 0.0)) throw ConfigError("extrapolation_tol must be positive");
        MollifierSpec{1, mollifier_points}.validate();
        for (const auto& x : probe_points) {
            if (static_cast<int>(x.size()) != D.dim()) throw ConfigError("probe point has the wrong dimension");
            if (!(D.signed_distance(x) < 0.0)) throw ConfigError("probe points must lie strictly inside D");
        }
    }
};

/// Scalar field tabulated on a uniform lattice over a box, read back by
/// multilinear interpolation (points outside the box are clamped).
class LatticeField {
public:
    LatticeField(const ScalarField& f, Point lo, Point hi, double spacing, unsigned threads = 0)
        : lo_(std::move(lo)), d_(lo_.size()) {
        n_.resize(d_);
        h_.resize(d_);
        std::size_t total = 1;
        for (std::size_t i = 0; i < d_; ++i) {
            n_[i] = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil((hi[i] - lo_[i]) / spacing)) + 1);
            h_[i] = (hi[i] - lo_[i]) / static_cast<double>(n_[i] - 1);
            total *= n_[i];
        }
        if (total > 20'000'000) throw ConfigError("rate lattice too large; increase rate_grid_spacing");
        values_.resize(total);
        parallel_for(total, threads, [&](std::size_t flat) {
            Point x(d_);
            std::size_t r = flat;
            for (std::size_t i = 0; i < d_; ++i) {
                x[i] = lo_[i] + static_cast<double>(r % n_[i]) * h_[i];
                r /= n_[i];
            }
            values_[flat] = f(x);
        });
    }

    double operator()(std::span<const double> x) const {
        std::vector<std::size_t> base(d_);
        std::vector<double> frac(d_);
        for (std::size_t i = 0; i < d_; ++i) {
            const double t = std::clamp((x[i] - lo_[i]) / h_[i], 0.0, static_cast<double>(n_[i] - 1));
            const auto b = std::min(static_cast<std::size_t>(t), n_[i] - 2);
            base[i] = b;
            frac[i] = t - static_cast<double>(b);
        }
        double v = 0.0;
        for (std::size_t corner = 0; corner < (std::size_t{1} << d_); ++corner) {
            double w = 1.0;
            std::size_t flat = 0, stride = 1;
            for (std::size_t i = 0; i < d_; ++i) {
                const bool up = (corner >> i) & 1u;
                w *= up ? frac[i] : 1.0 - frac[i];
                flat += (base[i] + (up ? 1 : 0)) * stride;
                stride *= n_[i];
            }
            if (w != 0.0) v += w * values_[flat];
        }
        return v;
    }

private:
    Point lo_;
    std::size_t d_;
    std::vector<std::size_t> n_;
    std::vector<double> h_;
    std::vector<double> values_;
};

namespace detail {

inline ScalarField maybe_lattice(ScalarField f, const Domain& D, double spacing, unsigned threads) {
    if (spacing <= 0.0) return f;
    auto [lo, hi] = D.bounding_box();
    auto grid = std::make_shared<LatticeField>(f, lo, hi, spacing, threads);
    return [grid](std::span<const double> x) { return (*grid)(x); };
}

inline double resolved_grid_spacing(const SolveConfig& cfg, int d, int k) {
    if (cfg.rate_grid_spacing >= 0.0) return cfg.rate_grid_spacing;
    return d == 1 ? 0.0 : 1.0 / (8.0 * k);
}

}  // namespace detail

/// Constant value of the rate c_k + div b_hat_k when it is constant on D.
inline std::optional<double> constant_weight_rate(const ProblemSpec& spec) {
    if (spec.extension == Extension::Zero) return std::nullopt;
    if (!spec.c.is_constant() || !spec.b_hat.is_constant()) return std::nullopt;
    return spec.c.constant_value();
}

/// x -> c_k(x) + div b_hat_k(x), evaluated directly from the lattice convolution.
inline ScalarField weight_rate(const ProblemSpec& spec, int k, int mollifier_points = 0) {
    if (auto v = constant_weight_rate(spec)) {
        const double r = *v;
        return [r](std::span<const double>) { return r; };
    }
    const MollifierSpec ms{k, mollifier_points};
    auto ck = std::make_shared<MollifiedField>(spec.c, ms, &spec.D, spec.extension);
    auto bk = std::make_shared<MollifiedField>(spec.b_hat, ms, &spec.D, spec.extension);
    return [ck, bk](std::span<const double> x) { return (*ck)(x) + bk->divergence(x); };
}

/// Per-path payoff e_k(tau) g(X_tau) + int_0^tau e_k f. A truncated path keeps
/// only its running f-integral.
inline double fk_payoff(const ExitSample& s, const Expression& g) {
    if (s.truncated) return s.weighted_f_integral;
    return std::exp(s.log_weight) * g(s.x_exit) + s.weighted_f_integral;
}

/// Stream index for path i at probe j; identical across the k-ladder so that
/// successive levels share their noise.
inline std::uint64_t path_stream(std::size_t probe, std::size_t path) {
    return (static_cast<std::uint64_t>(probe) << 40) | static_cast<std::uint64_t>(path);
}

inline ProcessSpec process_of(const ProblemSpec& spec) {
    ProcessSpec p;
    p.noise = spec.noise;
    p.drift = spec.b;
    return p;
}

namespace detail {

// Runs n paths from x and returns one payoff per path (NaN for failed paths).
template <typename Payoff>
std::vector<double> run_paths(const ProblemSpec& spec, const SolveConfig& cfg, std::span<const double> x,
                              std::size_t probe, const ScalarField& rate, const PathConfig& pcfg,
                              Payoff&& payoff, std::vector<char>* truncated = nullptr) {
    const ProcessSpec proc = process_of(spec);
    ScalarField f;
    if (!(spec.f.is_constant() && spec.f.constant_value() == 0.0)) {
        const Expression fe = spec.f;
        f = [fe](std::span<const double> y) { return fe(y); };
    }
    std::vector<double> values(cfg.n_paths);
    if (truncated) truncated->assign(cfg.n_paths, 0);
    parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t i) {
        RngStream rng(cfg.seed, path_stream(probe, i));
        try {
            const ExitSample s = simulate_to_exit(proc, spec.D, pcfg, x, rng, rate, f);
            const double v = payoff(s);
            values[i] = std::isfinite(v) ? v : std::numeric_limits<double>::quiet_NaN();
            if (truncated) (*truncated)[i] = s.truncated;
        } catch (const PathError&) {
            values[i] = std::numeric_limits<double>::quiet_NaN();
        } catch (const EvalError&) {
            values[i] = std::numeric_limits<double>::quiet_NaN();
        }
    });
    return values;
}

// Summary over the finite values, with failures counted and the failure budget enforced.
inline Estimate summarize_checked(const std::vector<double>& values, double max_failure_fraction) {
    std::vector<double> ok;
    ok.reserve(values.size());
    for (double v : values)
        if (std::isfinite(v)) ok.push_back(v);
    const std::size_t failures = values.size() - ok.size();
    if (static_cast<double>(failures) > max_failure_fraction * static_cast<double>(values.size()))
        throw NumericalError(std::to_string(failures) + " of " + std::to_string(values.size()) +
                             " paths produced non-finite values");
    Estimate e = summarize(ok);
    e.failures = failures;
    return e;
}

}  // namespace detail

/// Monte Carlo estimate of u_k(x). `probe` selects the family of noise streams.
inline Estimate estimate_u(const ProblemSpec& spec, const SolveConfig& cfg, std::span<const double> x, int k,
                           std::size_t probe = 0) {
    if (!spec.D.contains(x)) throw ConfigError("estimate_u needs a point inside D");
    ScalarField rate;
    if (auto v = constant_weight_rate(spec)) {
        if (*v != 0.0) {
            const double r = *v;
            rate = [r](std::span<const double>) { return r; };
        }
    } else {
        rate = detail::maybe_lattice(weight_rate(spec, k, cfg.mollifier_points), spec.D,
                                     detail::resolved_grid_spacing(cfg, spec.dim(), k), cfg.threads);
    }
    std::vector<char> truncated;
    const Expression g = spec.g;
    const auto values = detail::run_paths(spec, cfg, x, probe, rate, cfg.path,
                                          [&g](const ExitSample& s) { return fk_payoff(s, g); }, &truncated);
    Estimate e = detail::summarize_checked(values, cfg.max_failure_fraction);
    e.k = k;
    std::size_t nt = 0;
    for (char t : truncated) nt += t ? 1 : 0;
    e.truncation_fraction = static_cast<double>(nt) / static_cast<double>(values.size());
    return e;
}

struct ProbeResult {
    Point x;
    std::vector<Estimate> ladder;   // one per k in SolveConfig::k_ladder
    std::optional<int> converged_k; // first k with |u_k - u_prev| <= tol + 3 combined stderr
    Estimate u_star;                // estimate at the last ladder level
};

struct SolveResult {
    std::vector<ProbeResult> probes;
    bool all_converged() const {
        return std::all_of(probes.begin(), probes.end(), [](const ProbeResult& p) { return p.converged_k.has_value(); });
    }
};

inline SolveResult solve(const ProblemSpec& spec, const SolveConfig& cfg) {
    spec.validate();
    cfg.validate(spec.D);
    SolveResult out;
    for (std::size_t j = 0; j < cfg.probe_points.size(); ++j) {
        ProbeResult pr;
        pr.x = cfg.probe_points[j];
        for (int k : cfg.k_ladder) {
            pr.ladder.push_back(estimate_u(spec, cfg, pr.x, k, j));
            const std::size_t m = pr.ladder.size();
            if (m >= 2 && !pr.converged_k) {
                const Estimate& a = pr.ladder[m - 2];
                const Estimate& b = pr.ladder[m - 1];
                if (std::abs(b.mean - a.mean) <= cfg.extrapolation_tol + 3.0 * combined_stderr(a, b)) pr.converged_k = k;
            }
        }
        pr.u_star = pr.ladder.back();
        out.probes.push_back(std::move(pr));
    }
    return out;
}

// Moment diagnostics --------------------------------------------------------

struct MomentEstimate {
    Estimate estimate;
    double top_share = 0.0;  // share of the sample sum carried by the largest 1% of samples
    bool stable = true;      // top_share <= 0.5
};

struct ProbeMoments {
    Point x;
    Estimate occupation;          // E_x int_0^tau h_k
    Estimate exit_time;           // E_x tau
    MomentEstimate exp_moment_8h; // E_x exp(int_0^tau 8 h_k)
    std::vector<double> nu_grid;
    std::vector<MomentEstimate> exp_moment_nu_tau;  // E_x exp(nu tau), one per nu
};

struct MomentDiagnostics {
    std::vector<ProbeMoments> probes;
    double occupation_bound = 0.0;  // max over probes of the occupation estimate
    int k = 0;
    std::string verdict;            // "weights-stable" or "weights-unstable"
};

inline MomentEstimate tail_checked(std::span<const double> values) {
    MomentEstimate m;
    m.estimate = summarize(values);
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const std::size_t top = std::max<std::size_t>(1, sorted.size() / 100);
    const double total = std::accumulate(sorted.begin(), sorted.end(), 0.0);
    const double head = std::accumulate(sorted.begin(), sorted.begin() + static_cast<long>(top), 0.0);
    m.top_share = total > 0.0 ? head / total : 0.0;
    m.stable = std::isfinite(m.estimate.mean) && m.top_share <= 0.5;
    return m;
}

inline std::vector<double> default_nu_grid() { return {0.0625, 0.125, 0.25, 0.5, 1.0, 2.0}; }

/// Khasminskii-type moment diagnostics at the last ladder level. Uses the same
/// paths for every moment of a probe.
inline MomentDiagnostics diagnose_moments(const ProblemSpec& spec, const SolveConfig& cfg,
                                          std::vector<double> nu_grid = default_nu_grid()) {
    spec.validate();
    cfg.validate(spec.D);
    MomentDiagnostics out;
    out.k = cfg.k_ladder.back();
    ScalarField hk;
    if (spec.h.is_constant() && spec.extension == Extension::Natural) {
        const double v = spec.h.constant_value();
        hk = [v](std::span<const double>) { return v; };
    } else {
        auto m = std::make_shared<MollifiedField>(spec.h, MollifierSpec{out.k, cfg.mollifier_points}, &spec.D,
                                                  spec.extension);
        hk = detail::maybe_lattice([m](std::span<const double> x) { return (*m)(x); }, spec.D,
                                   detail::resolved_grid_spacing(cfg, spec.dim(), out.k), cfg.threads);
    }
    PathConfig pcfg = cfg.path;
    pcfg.record = {hk};
    const ProcessSpec proc = process_of(spec);
    bool stable = true;
    for (std::size_t j = 0; j < cfg.probe_points.size(); ++j) {
        const Point& x = cfg.probe_points[j];
        std::vector<double> occ(cfg.n_paths), tau(cfg.n_paths);
        parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t i) {
            RngStream rng(cfg.seed, path_stream(j, i));
            const ExitSample s = simulate_to_exit(proc, spec.D, pcfg, x, rng);
            occ[i] = s.integrals[0];
            tau[i] = s.tau;
        });
        ProbeMoments pm;
        pm.x = x;
        pm.occupation = summarize(occ);
        pm.exit_time = summarize(tau);
        std::vector<double> v(cfg.n_paths);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(8.0 * occ[i]);
        pm.exp_moment_8h = tail_checked(v);
        stable = stable && pm.exp_moment_8h.stable;
        pm.nu_grid = nu_grid;
        for (double nu : nu_grid) {
            for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(nu * tau[i]);
            pm.exp_moment_nu_tau.push_back(tail_checked(v));
            stable = stable && pm.exp_moment_nu_tau.back().stable;
        }
        out.occupation_bound = std::max(out.occupation_bound, pm.occupation.mean);
        out.probes.push_back(std::move(pm));
    }
    out.verdict = stable ? "weights-stable" : "weights-unstable";
    return out;
}

// Boundary continuity ---------------------------------------------------------

struct BoundaryRow {
    double radius = 0.0;
    Point x;
    Estimate u;
    double gap = 0.0;  // |u(x) - g(z)|
};

struct BoundaryProbeReport {
    Point z;
    double g_at_z = 0.0;
    bool g_continuous = true;  // numerically, from one-sided samples of g around z
    std::vector<BoundaryRow> rows;
    double trend_slope = 0.0;  // weighted least-squares slope of gap against ladder index
    double trend_t = 0.0;
    bool decreasing = false;   // one-sided trend test at 95%
    bool claim = false;        // continuity claim emitted (g continuous and decreasing)
};

/// Largest |g(z + eps u) - g(z)| over exterior directions u.
inline double exterior_oscillation(const ProblemSpec& spec, std::span<const double> z, double eps) {
    const int d = spec.dim();
    const double gz = spec.g(z);
    double worst = 0.0;
    auto probe = [&](std::span<const double> u) {
        Point y(z.begin(), z.end());
        for (int i = 0; i < d; ++i) y[static_cast<std::size_t>(i)] += eps * u[static_cast<std::size_t>(i)];
        if (spec.D.contains(y)) return;
        worst = std::max(worst, std::abs(spec.g(y) - gz));
    };
    const SphereRule rule = sphere_rule(d, 16);
    for (const auto& u : rule.directions) probe(u);
    return worst;
}

inline BoundaryProbeReport boundary_continuity_probe(const ProblemSpec& spec, const SolveConfig& cfg,
                                                     std::span<const double> z, const std::vector<double>& radii,
                                                     int k) {
    spec.validate();
    if (radii.size() < 3) throw ConfigError("boundary probe needs at least three radii");
    if (std::abs(spec.D.signed_distance(z)) > 1e-9) throw ConfigError("z must lie on the boundary of D");
    BoundaryProbeReport rep;
    rep.z.assign(z.begin(), z.end());
    rep.g_at_z = spec.g(z);
    rep.g_continuous = exterior_oscillation(spec, z, 1e-7) <= 1e-3;
    const Point n = spec.D.outward_normal(z);
    for (std::size_t j = 0; j < radii.size(); ++j) {
        BoundaryRow row;
        row.radius = radii[j];
        row.x = rep.z;
        for (std::size_t i = 0; i < row.x.size(); ++i) row.x[i] -= radii[j] * n[i];
        if (!spec.D.contains(row.x)) throw ConfigError("boundary probe point x_j lies outside D");
        row.u = estimate_u(spec, cfg, row.x, k, j);
        row.gap = std::abs(row.u.mean - rep.g_at_z);
        rep.rows.push_back(std::move(row));
    }
    // Weighted least squares gap_j = a + s j with weights 1 / se_j^2 (floored).
    double floor_se = 1e-12;
    for (const auto& r : rep.rows) floor_se = std::max(floor_se, 1e-3 * r.u.std_error);
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t j = 0; j < rep.rows.size(); ++j) {
        const double se = std::max(rep.rows[j].u.std_error, floor_se);
        const double w = 1.0 / (se * se);
        const double xj = static_cast<double>(j), yj = rep.rows[j].gap;
        sw += w;
        sx += w * xj;
        sy += w * yj;
        sxx += w * xj * xj;
        sxy += w * xj * yj;
    }
    const double det = sw * sxx - sx * sx;
    rep.trend_slope = (sw * sxy - sx * sy) / det;
    const double slope_se = std::sqrt(sw / det);
    rep.trend_t = rep.trend_slope / slope_se;
    rep.decreasing = rep.trend_t < -1.645;
    rep.claim = rep.g_continuous && rep.decreasing;
    return rep;
}

}  // namespace cvp
