#pragma once

// Weak-form residual of a candidate u against bump test functions:
//
//   R(phi) = int <grad u, grad phi> + (a^alpha A / 2) iint (u(x) - u(y))(phi(x) - phi(y)) / |x - y|^{d+alpha}
//            - int <b, grad u> phi - int c u phi + int <b_hat, grad(u phi)> - int f phi.
//
// The double integral is evaluated as int u psi with psi = -a^alpha Delta^{alpha/2} phi,
// which is radial about the bump centre and tabulated once per bump. Inside D, u
// comes from a lattice (multilinear interpolation, centred-difference gradients);
// on D^c, u = g analytically. Every grid-dependent term is assembled as a linear
// functional of the node values, so the propagated Monte Carlo noise is exact
// arithmetic on the node standard errors.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

#include "cvp/domain.hpp"
#include "cvp/error.hpp"
#include "cvp/expr.hpp"
#include "cvp/fk.hpp"
#include "cvp/kernels.hpp"
#include "cvp/quadrature.hpp"

namespace cvp {

/// Candidate u on a uniform lattice covering a neighbourhood of D. Nodes outside
/// D always carry g.
class GridFunction {
public:
    using Inside = std::function<double(std::span<const double>)>;

    /// Lattice over the bounding box of D widened by `collar` nodes per side, with
    /// an even number of intervals per axis (so the grid can be coarsened by two).
    static GridFunction sample(const Domain& D, const Expression& g, double hx, const Inside& inside,
                               const Inside& stderr_at = nullptr, int collar = 2) {
        if (!(hx > 0.0)) throw ConfigError("grid spacing must be positive");
        auto [blo, bhi] = D.bounding_box();
        const std::size_t d = blo.size();
        Point lo(d);
        std::vector<std::size_t> n(d);
        for (std::size_t i = 0; i < d; ++i) {
            lo[i] = blo[i] - collar * hx;
            auto intervals = static_cast<std::size_t>(std::ceil((bhi[i] + collar * hx - lo[i]) / hx - 1e-9));
            if (intervals % 2) ++intervals;
            n[i] = intervals + 1;
        }
        GridFunction u(D, g, lo, hx, n, {}, {});
        u.values_.resize(u.size());
        if (stderr_at) u.stderrs_.assign(u.size(), 0.0);
        for (std::size_t k = 0; k < u.size(); ++k) {
            const Point x = u.node(k);
            if (!D.contains(x)) continue;
            u.values_[k] = inside(x);
            if (stderr_at) u.stderrs_[k] = stderr_at(x);
        }
        u.finish();
        return u;
    }

    GridFunction(Domain D, Expression g, Point lo, double hx, std::vector<std::size_t> n, std::vector<double> values,
                 std::vector<double> stderrs)
        : D_(std::move(D)), g_(std::move(g)), lo_(std::move(lo)), hx_(hx), n_(std::move(n)),
          values_(std::move(values)), stderrs_(std::move(stderrs)) {
        if (static_cast<int>(lo_.size()) != D_.dim() || n_.size() != lo_.size())
            throw ConfigError("grid dimension differs from the domain dimension");
        if (g_.dim() != D_.dim()) throw ConfigError("g dimension differs from the domain dimension");
        for (auto m : n_)
            if (m < 3) throw ConfigError("grid needs at least three nodes per axis");
        if (!values_.empty()) finish();
    }

    int dim() const noexcept { return static_cast<int>(lo_.size()); }
    double spacing() const noexcept { return hx_; }
    const Point& lo() const noexcept { return lo_; }
    const std::vector<std::size_t>& counts() const noexcept { return n_; }
    std::size_t size() const {
        std::size_t s = 1;
        for (auto m : n_) s *= m;
        return s;
    }
    const std::vector<double>& values() const noexcept { return values_; }
    const std::vector<double>& stderrs() const noexcept { return stderrs_; }
    const Domain& domain() const noexcept { return D_; }
    const Expression& exterior() const noexcept { return g_; }

    Point node(std::size_t flat) const {
        Point x(lo_.size());
        for (std::size_t i = 0; i < lo_.size(); ++i) {
            x[i] = lo_[i] + static_cast<double>(flat % n_[i]) * hx_;
            flat /= n_[i];
        }
        return x;
    }

    /// Multilinear weights of x over the corners of its cell (x clamped to the lattice).
    void stencil(std::span<const double> x, std::vector<std::pair<std::size_t, double>>& out) const {
        out.clear();
        const std::size_t d = lo_.size();
        std::size_t base[8];
        double frac[8];
        for (std::size_t i = 0; i < d; ++i) {
            const double t = std::clamp((x[i] - lo_[i]) / hx_, 0.0, static_cast<double>(n_[i] - 1));
            const auto b = std::min(static_cast<std::size_t>(t), n_[i] - 2);
            base[i] = b;
            frac[i] = t - static_cast<double>(b);
        }
        for (std::size_t corner = 0; corner < (std::size_t{1} << d); ++corner) {
            double w = 1.0;
            std::size_t flat = 0, stride = 1;
            for (std::size_t i = 0; i < d; ++i) {
                const bool up = (corner >> i) & 1u;
                w *= up ? frac[i] : 1.0 - frac[i];
                flat += (base[i] + (up ? 1 : 0)) * stride;
                stride *= n_[i];
            }
            if (w != 0.0) out.emplace_back(flat, w);
        }
    }

    double operator()(std::span<const double> x) const {
        if (!D_.contains(x)) return g_(x);
        std::vector<std::pair<std::size_t, double>> st;
        stencil(x, st);
        double v = 0.0;
        for (auto [k, w] : st) v += w * values_[k];
        return v;
    }

    /// Same function with the node values replaced (nodes off D are reset to g).
    GridFunction with_values(std::vector<double> values, std::vector<double> stderrs = {}) const {
        GridFunction u = *this;
        u.values_ = std::move(values);
        u.stderrs_ = std::move(stderrs);
        u.finish();
        return u;
    }

    /// Every other node along each axis.
    GridFunction coarsened() const {
        std::vector<std::size_t> n(n_.size());
        for (std::size_t i = 0; i < n_.size(); ++i) n[i] = (n_[i] - 1) / 2 + 1;
        GridFunction c(D_, g_, lo_, 2.0 * hx_, n, {}, {});
        c.values_.resize(c.size());
        if (!stderrs_.empty()) c.stderrs_.resize(c.size());
        for (std::size_t k = 0; k < c.size(); ++k) {
            std::size_t r = k, flat = 0, stride = 1;
            for (std::size_t i = 0; i < n.size(); ++i) {
                flat += 2 * (r % n[i]) * stride;
                r /= n[i];
                stride *= n_[i];
            }
            c.values_[k] = values_[flat];
            if (!stderrs_.empty()) c.stderrs_[k] = stderrs_[flat];
        }
        c.finish();
        return c;
    }

private:
    void finish() {
        if (values_.size() != size()) throw ConfigError("grid value count differs from the node count");
        if (!stderrs_.empty() && stderrs_.size() != size()) throw ConfigError("grid stderr count differs from the node count");
        if (lo_.size() > 3) throw ConfigError("grid functions are implemented for d <= 3");
        for (std::size_t k = 0; k < values_.size(); ++k) {
            const Point x = node(k);
            if (!D_.contains(x)) {
                values_[k] = g_(x);
                if (!stderrs_.empty()) stderrs_[k] = 0.0;
            }
            if (!std::isfinite(values_[k])) throw NumericalError("grid value is not finite at node " + std::to_string(k));
        }
    }

    Domain D_;
    Expression g_;
    Point lo_;
    double hx_;
    std::vector<std::size_t> n_;
    std::vector<double> values_;
    std::vector<double> stderrs_;
};

/// phi(x) = exp(-1 / (1 - |x - y|^2 / r^2)) on B_r(y), zero outside.
struct BumpTestFunction {
    Point center;
    double radius = 1.0;

    static double shape(double rho2) { return rho2 < 1.0 ? std::exp(-1.0 / (1.0 - rho2)) : 0.0; }

    double radial(double s) const { return shape(s * s / (radius * radius)); }

    double operator()(std::span<const double> x) const {
        double s2 = 0.0;
        for (std::size_t i = 0; i < center.size(); ++i) s2 += (x[i] - center[i]) * (x[i] - center[i]);
        return shape(s2 / (radius * radius));
    }

    void gradient(std::span<const double> x, std::span<double> out) const {
        double s2 = 0.0;
        for (std::size_t i = 0; i < center.size(); ++i) s2 += (x[i] - center[i]) * (x[i] - center[i]);
        const double rho2 = s2 / (radius * radius);
        if (rho2 >= 1.0) {
            std::fill(out.begin(), out.end(), 0.0);
            return;
        }
        const double q = 1.0 - rho2;
        const double f = shape(rho2) * (-2.0 / (radius * radius * q * q));
        for (std::size_t i = 0; i < center.size(); ++i) out[i] = f * (x[i] - center[i]);
    }

    /// int phi over R^d.
    double mass() const {
        const int d = static_cast<int>(center.size());
        const double radial_int = integrate_panels(
            [&](double s) { return radial(s) * std::pow(s, d - 1); }, 0.0, radius, 64, 10);
        return unit_sphere_area(d) * radial_int;
    }
};

struct ResidualTerms {
    double gradient = 0.0;
    double fractional = 0.0;
    double drift = 0.0;
    double c_term = 0.0;
    double b_hat_term = 0.0;
    double f_term = 0.0;

    double total() const { return gradient + fractional + drift + c_term + b_hat_term + f_term; }
};

struct ResidualReport {
    Point center;
    double radius = 0.0;
    ResidualTerms terms;
    double total = 0.0;
    double quadrature_error = 0.0;  // cell rule against a lower-order rule, plus the exterior polar rule
    double kernel_error = 0.0;      // tabulated psi against a refined evaluation
    double tail_bound = 0.0;        // sup|g| int_{|x - y| > R_far} |psi|
    double consistency = 0.0;       // |R(u_h) - R(u_2h)|
    double mc_noise = 0.0;          // 3 sqrt(sum_i (dR/du_i)^2 se_i^2)
    double budget = 0.0;
    bool pass = false;
};

struct WeakformOptions {
    int quad_points = 5;        // Gauss points per lattice cell and axis
    int quad_points_check = 3;  // lower-order rule for the quadrature error
    int min_nodes_across = 8;   // refuse bumps narrower than this many grid spacings
    double far_radius = 0.0;    // R_far; 0 picks 1000 diam(D)
    int sphere_resolution = 48;
    int kernel_panels = 8;      // radial panels per segment for psi
    bool consistency = true;
};

namespace detail {

// psi(s) = -a^alpha Delta^{alpha/2} phi at distance s from the bump centre:
//   Delta^{alpha/2} phi(x) = A |S| int_0^inf M(rho) rho^{-1-alpha} drho,
// with M(rho) the sphere mean of phi(x + rho theta) - phi(x).
class RadialKernel {
public:
    RadialKernel(const BumpTestFunction& phi, double alpha, double a, double s_max, int panels)
        : phi_(phi), d_(static_cast<int>(phi.center.size())), alpha_(alpha), panels_(panels) {
        scale_ = -std::pow(a, alpha) * frac_constant(d_, alpha) * unit_sphere_area(d_);
        if (d_ >= 2) {
            angle_rule_ = gauss_legendre(8);
            angle_norm_ = std::sqrt(std::numbers::pi) * std::tgamma(0.5 * (d_ - 1)) / std::tgamma(0.5 * d_);
        }
        const double r = phi.radius;
        near_h_ = r / 128.0;
        near_end_ = 2.0 * r;
        std::vector<double> near, near_err;
        for (int j = 0; j <= 256; ++j) {
            const double s = j * near_h_;
            const double v = evaluate(s, panels_), v2 = evaluate(s, 2 * panels_);
            near.push_back(v2);
            near_err.push_back(std::abs(v2 - v));
        }
        near_ = boost::math::interpolators::cardinal_cubic_b_spline<double>(near.data(), near.size(), 0.0, near_h_, 0.0);
        log_h_ = std::log(1.02);
        s_max_ = std::max(s_max, 4.0 * r);
        const auto nfar = static_cast<std::size_t>(std::ceil(std::log(s_max_ / near_end_) / log_h_)) + 1;
        std::vector<double> far, far_err;
        for (std::size_t j = 0; j <= nfar; ++j) {
            const double s = near_end_ * std::exp(static_cast<double>(j) * log_h_);
            const double v = evaluate(s, panels_), v2 = evaluate(s, 2 * panels_);
            far.push_back(v2);
            far_err.push_back(std::abs(v2 - v));
        }
        far_ = boost::math::interpolators::cardinal_cubic_b_spline<double>(far.data(), far.size(), std::log(near_end_), log_h_);
        // int |psi_err| over R^d, trapezoid on the tabulation nodes.
        const double S = unit_sphere_area(d_);
        for (std::size_t j = 1; j < near_err.size(); ++j) {
            const double s0 = (j - 1) * near_h_, s1 = j * near_h_;
            err_l1_ += 0.5 * near_h_ * S * (near_err[j - 1] * std::pow(s0, d_ - 1) + near_err[j] * std::pow(s1, d_ - 1));
        }
        for (std::size_t j = 1; j < far_err.size(); ++j) {
            const double s0 = near_end_ * std::exp((j - 1) * log_h_), s1 = near_end_ * std::exp(j * log_h_);
            err_l1_ += 0.5 * (s1 - s0) * S * (far_err[j - 1] * std::pow(s0, d_ - 1) + far_err[j] * std::pow(s1, d_ - 1));
        }
        // Spline error, checked at interval midpoints against direct evaluation.
        for (std::size_t j = 0; j + 1 < near.size(); j += 8) {
            const double s = (j + 0.5) * near_h_;
            spline_err_ = std::max(spline_err_, std::abs(near_(s) - evaluate(s, 2 * panels_)));
        }
    }

    double operator()(double s) const {
        if (s <= near_end_) return near_(s);
        if (s >= s_max_) return far_(std::log(s_max_)) * std::pow(s_max_ / s, d_ + alpha_);
        return far_(std::log(s));
    }

    /// int |psi_refined - psi_coarse| over R^d, plus the spline error over B_{2r}.
    double error_l1() const {
        return err_l1_ + spline_err_ * unit_sphere_area(d_) * std::pow(near_end_, d_) / d_;
    }

    double evaluate(double s, int panels) const {
        const double r = phi_.radius;
        const double phix = phi_.radial(s);
        auto M = [&](double rho) { return sphere_mean(s, rho) - phix; };
        auto integrand = [&](double rho) { return M(rho) * std::pow(rho, -1.0 - alpha_); };
        double acc = 0.0;
        const double top = s + r;
        if (s < r) {
            // Dyadic grading into rho = 0; below rho_min, M(rho) ~ kappa rho^2.
            const double rho_min = 1e-3 * r;
            const double kappa = M(rho_min) / (rho_min * rho_min);
            acc += kappa * std::pow(rho_min, 2.0 - alpha_) / (2.0 - alpha_);
            const double mid = r - s;
            double a = rho_min;
            const double graded_end = std::max(mid, rho_min);
            while (a < graded_end) {
                const double b = std::min(2.0 * a, graded_end);
                acc += integrate_panels(integrand, a, b, std::max(1, panels / 4), 8);
                a = b;
            }
            acc += integrate_panels(integrand, graded_end, top, panels, 8);
        } else {
            acc += integrate_panels(integrand, s - r, top, panels, 8);
        }
        acc += -phix * std::pow(top, -alpha_) / alpha_;
        return scale_ * acc;
    }

private:
    // Mean of phi over the sphere of radius rho about a point at distance s from the centre.
    double sphere_mean(double s, double rho) const {
        const double r = phi_.radius;
        if (d_ == 1) return 0.5 * (phi_.radial(std::abs(s + rho)) + phi_.radial(std::abs(s - rho)));
        if (s == 0.0) return phi_.radial(rho);
        if (rho >= s + r || rho <= s - r) return 0.0;
        // |x + rho theta - y|^2 = s^2 + rho^2 + 2 s rho cos(t); inside the support for cos(t) < k.
        const double k = (r * r - s * s - rho * rho) / (2.0 * s * rho);
        const double t0 = k >= 1.0 ? 0.0 : std::acos(std::max(-1.0, k));
        const double phix = phi_.radial(s);
        const bool full = k >= 1.0;
        const int np = panels_;
        const double h = (std::numbers::pi - t0) / np;
        double sum = 0.0;
        for (int p = 0; p < np; ++p) {
            const double mid = t0 + (p + 0.5) * h;
            for (std::size_t i = 0; i < angle_rule_.nodes.size(); ++i) {
                const double t = mid + 0.5 * h * angle_rule_.nodes[i];
                const double dist2 = s * s + rho * rho + 2.0 * s * rho * std::cos(t);
                double v = phi_.radial(std::sqrt(std::max(0.0, dist2)));
                // Full-sphere case: integrate the difference, to keep small-rho cancellation exact.
                if (full) v -= phix;
                sum += angle_rule_.weights[i] * 0.5 * h * v * std::pow(std::sin(t), d_ - 2);
            }
        }
        sum /= angle_norm_;
        return full ? sum + phix : sum;
    }

    BumpTestFunction phi_;
    int d_;
    double alpha_;
    int panels_;
    double scale_ = 0.0;
    QuadratureRule angle_rule_;
    double angle_norm_ = 1.0;
    double near_h_ = 0.0, near_end_ = 0.0, log_h_ = 0.0, s_max_ = 0.0;
    boost::math::interpolators::cardinal_cubic_b_spline<double> near_, far_;
    double err_l1_ = 0.0, spline_err_ = 0.0;
};

// A term as node weights G plus a constant: value = G . u + c.
struct LinearForm {
    std::vector<double> G;
    double c = 0.0;

    double value(const std::vector<double>& u) const {
        double s = c;
        for (std::size_t k = 0; k < G.size(); ++k) s += G[k] * u[k];
        return s;
    }
};

struct AssembledTerms {
    LinearForm gradient, fractional, drift, c_term, b_hat_term, f_term;

    ResidualTerms values(const std::vector<double>& u) const {
        return {gradient.value(u), fractional.value(u), drift.value(u), c_term.value(u), b_hat_term.value(u),
                f_term.value(u)};
    }

    std::vector<double> total_weights() const {
        std::vector<double> G(gradient.G.size(), 0.0);
        for (const LinearForm* t : {&gradient, &fractional, &drift, &c_term, &b_hat_term, &f_term})
            for (std::size_t k = 0; k < G.size(); ++k) G[k] += t->G[k];
        return G;
    }
};

// Visits the Gauss points of every lattice cell meeting [lo, hi].
template <typename F>
void for_each_cell_point(const GridFunction& u, const Point& lo, const Point& hi, int nq, F&& fn) {
    const std::size_t d = u.lo().size();
    const QuadratureRule rule = gauss_legendre(nq);
    const double h = u.spacing();
    std::vector<long> first(d), last(d);
    for (std::size_t i = 0; i < d; ++i) {
        first[i] = std::max(0L, static_cast<long>(std::floor((lo[i] - u.lo()[i]) / h)));
        last[i] = std::min(static_cast<long>(u.counts()[i]) - 2, static_cast<long>(std::ceil((hi[i] - u.lo()[i]) / h)));
    }
    std::vector<long> cell(first);
    std::vector<std::size_t> q(d, 0);
    Point x(d);
    const double w_cell = std::pow(0.5 * h, static_cast<double>(d));
    while (true) {
        std::fill(q.begin(), q.end(), 0);
        while (true) {
            double w = w_cell;
            for (std::size_t i = 0; i < d; ++i) {
                x[i] = u.lo()[i] + (static_cast<double>(cell[i]) + 0.5 + 0.5 * rule.nodes[q[i]]) * h;
                w *= rule.weights[q[i]];
            }
            fn(std::span<const double>(x), w);
            std::size_t i = 0;
            for (; i < d; ++i) {
                if (++q[i] < rule.nodes.size()) break;
                q[i] = 0;
            }
            if (i == d) break;
        }
        std::size_t i = 0;
        for (; i < d; ++i) {
            if (++cell[i] <= last[i]) break;
            cell[i] = first[i];
        }
        if (i == d) break;
    }
}

// psi == nullptr drops the nonlocal term (a = 0).
inline AssembledTerms assemble(const GridFunction& u, const BumpTestFunction& phi, const RadialKernel* psi,
                               const ProblemSpec& spec, int nq) {
    const std::size_t d = phi.center.size();
    const std::size_t N = u.size();
    AssembledTerms t;
    for (LinearForm* f : {&t.gradient, &t.fractional, &t.drift, &t.c_term, &t.b_hat_term, &t.f_term}) f->G.assign(N, 0.0);
    const double h = u.spacing();
    const bool has_b = !spec.b.is_zero(), has_c = !(spec.c.is_constant() && spec.c.constant_value() == 0.0);
    const bool has_bh = !spec.b_hat.is_zero(), has_f = !(spec.f.is_constant() && spec.f.constant_value() == 0.0);

    // Local terms over the bump support.
    Point lo(d), hi(d);
    for (std::size_t i = 0; i < d; ++i) {
        lo[i] = phi.center[i] - phi.radius;
        hi[i] = phi.center[i] + phi.radius;
    }
    std::vector<std::pair<std::size_t, double>> s0;
    std::vector<std::vector<std::pair<std::size_t, double>>> sp(d), sm(d);
    std::vector<double> gphi(d), bv(d), bhv(d);
    Point y(d);
    for_each_cell_point(u, lo, hi, nq, [&](std::span<const double> x, double w) {
        const double p = phi(x);
        if (p == 0.0) return;
        phi.gradient(x, gphi);
        u.stencil(x, s0);
        for (std::size_t i = 0; i < d; ++i) {
            std::copy(x.begin(), x.end(), y.begin());
            y[i] += h;
            u.stencil(y, sp[i]);
            y[i] -= 2.0 * h;
            u.stencil(y, sm[i]);
        }
        if (has_b) spec.b.evaluate(x, bv);
        if (has_bh) spec.b_hat.evaluate(x, bhv);
        // Adds coef * d_i u (centred difference) to a form.
        auto add_grad = [&](LinearForm& f, std::size_t i, double coef) {
            for (auto [k, wk] : sp[i]) f.G[k] += coef * wk / (2.0 * h);
            for (auto [k, wk] : sm[i]) f.G[k] -= coef * wk / (2.0 * h);
        };
        for (std::size_t i = 0; i < d; ++i) {
            add_grad(t.gradient, i, w * gphi[i]);
            if (has_b) add_grad(t.drift, i, -w * bv[i] * p);
            if (has_bh) add_grad(t.b_hat_term, i, w * bhv[i] * p);
        }
        if (has_bh) {
            double bg = 0.0;
            for (std::size_t i = 0; i < d; ++i) bg += bhv[i] * gphi[i];
            for (auto [k, wk] : s0) t.b_hat_term.G[k] += w * bg * wk;
        }
        if (has_c) {
            const double cv = spec.c(x);
            for (auto [k, wk] : s0) t.c_term.G[k] -= w * cv * p * wk;
        }
        if (has_f) t.f_term.c -= w * spec.f(x) * p;
    });

    if (!psi) return t;
    // Nonlocal term, part inside D: int_D (u - g) psi.
    auto [blo, bhi] = spec.D.bounding_box();
    const bool g_zero = spec.g.is_constant() && spec.g.constant_value() == 0.0;
    for_each_cell_point(u, blo, bhi, nq, [&](std::span<const double> x, double w) {
        if (!spec.D.contains(x)) return;
        double s2 = 0.0;
        for (std::size_t i = 0; i < d; ++i) s2 += (x[i] - phi.center[i]) * (x[i] - phi.center[i]);
        const double ps = (*psi)(std::sqrt(s2)) * w;
        u.stencil(x, s0);
        for (auto [k, wk] : s0) t.fractional.G[k] += ps * wk;
        if (!g_zero) t.fractional.c -= ps * spec.g(x);
    });
    return t;
}

// int_{R^d} g psi in polar coordinates about the bump centre, out to R_far.
// Returns the value and sup |g| seen at the nodes.
inline std::pair<double, double> exterior_integral(const ProblemSpec& spec, const BumpTestFunction& phi,
                                                   const RadialKernel& psi, double r_far, int nq, int sphere_res) {
    const int d = static_cast<int>(phi.center.size());
    const SphereRule sph = sphere_rule(d, sphere_res);
    double sup = 0.0;
    Point x(phi.center.size());
    auto shell = [&](double rho) {
        double s = 0.0;
        for (std::size_t k = 0; k < sph.directions.size(); ++k) {
            for (std::size_t i = 0; i < x.size(); ++i) x[i] = phi.center[i] + rho * sph.directions[k][i];
            const double gv = spec.g(x);
            sup = std::max(sup, std::abs(gv));
            s += sph.weights[k] * gv;
        }
        return s * psi(rho) * std::pow(rho, d - 1);
    };
    double acc = integrate_panels(shell, 0.0, phi.radius, 16, nq);
    for (double a = phi.radius; a < r_far;) {
        const double b = std::min(r_far, a * 1.25);
        acc += integrate_panels(shell, a, b, 1, nq);
        a = b;
    }
    return {acc, sup};
}

}  // namespace detail

/// Residual of u against one bump, with its error budget.
inline ResidualReport assemble_residual(const GridFunction& u, const BumpTestFunction& phi, const ProblemSpec& spec,
                                        const WeakformOptions& opt = {}) {
    spec.validate();
    const int d = spec.dim();
    if (u.dim() != d || static_cast<int>(phi.center.size()) != d) throw ConfigError("dimension mismatch in the residual");
    if (!(phi.radius > 0.0) || !(spec.D.signed_distance(phi.center) < -phi.radius))
        throw ConfigError("bump support must lie inside D");
    if (2.0 * phi.radius / u.spacing() < opt.min_nodes_across)
        throw ConfigError("grid too coarse: fewer than " + std::to_string(opt.min_nodes_across) + " nodes across the bump");
    const double diam = spec.D.geometry_constants().diameter;
    const double r_far = opt.far_radius > 0.0 ? opt.far_radius : 1000.0 * diam;
    const double a = spec.noise.a;
    const double alpha = spec.noise.alpha;

    ResidualReport rep;
    rep.center = phi.center;
    rep.radius = phi.radius;
    std::optional<detail::RadialKernel> psi;
    if (a > 0.0) psi.emplace(phi, alpha, a, r_far, opt.kernel_panels);
    const detail::RadialKernel* kernel = psi ? &*psi : nullptr;
    auto assemble = [&](const GridFunction& grid, int nq) { return detail::assemble(grid, phi, kernel, spec, nq); };

    const auto hi = assemble(u, opt.quad_points);
    const auto lo = assemble(u, opt.quad_points_check);
    rep.terms = hi.values(u.values());
    const ResidualTerms lo_terms = lo.values(u.values());

    double ext = 0.0, ext_lo = 0.0, sup_g = 0.0;
    const bool g_const = spec.g.is_constant();
    if (kernel && !g_const) {
        std::tie(ext, sup_g) = detail::exterior_integral(spec, phi, *kernel, r_far, opt.quad_points + 3, opt.sphere_resolution);
        ext_lo = detail::exterior_integral(spec, phi, *kernel, r_far, opt.quad_points, opt.sphere_resolution / 2).first;
    } else if (g_const) {
        sup_g = std::abs(spec.g.constant_value());  // int psi = 0, so a constant g contributes nothing
    }
    rep.terms.fractional += ext;
    rep.total = rep.terms.total();
    rep.quadrature_error = std::abs(rep.total - (lo_terms.total() + ext_lo));

    if (kernel) {
        double sup_u = sup_g;
        for (double v : u.values()) sup_u = std::max(sup_u, std::abs(v));
        rep.kernel_error = sup_u * kernel->error_l1();
        if (!g_const) {
            // |psi(x)| <= a^alpha A |phi|_1 (|x - y| - r)^{-d-alpha} outside the support.
            const double c = std::pow(a, alpha) * frac_constant(d, alpha) * phi.mass() * unit_sphere_area(d);
            rep.tail_bound = sup_g * c * std::pow(r_far - phi.radius, -alpha) / alpha;
        }
    }
    if (opt.consistency) {
        const GridFunction coarse = u.coarsened();
        rep.consistency = std::abs(rep.total - ext - assemble(coarse, opt.quad_points).values(coarse.values()).total());
    }
    if (!u.stderrs().empty()) {
        const auto G = hi.total_weights();
        double s = 0.0;
        for (std::size_t k = 0; k < G.size(); ++k) s += G[k] * G[k] * u.stderrs()[k] * u.stderrs()[k];
        rep.mc_noise = 3.0 * std::sqrt(s);
    }
    rep.budget = rep.quadrature_error + rep.kernel_error + rep.tail_bound + rep.consistency + rep.mc_noise;
    rep.pass = std::abs(rep.total) <= rep.budget;
    return rep;
}

/// Radical-inverse (Halton) point in [0, 1)^d.
inline Point halton(std::size_t index, int d) {
    static constexpr int primes[] = {2, 3, 5, 7, 11, 13};
    Point x(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
        double f = 1.0, v = 0.0;
        std::size_t n = index;
        while (n > 0) {
            f /= primes[i];
            v += f * static_cast<double>(n % static_cast<std::size_t>(primes[i]));
            n /= static_cast<std::size_t>(primes[i]);
        }
        x[static_cast<std::size_t>(i)] = v;
    }
    return x;
}

/// Bumps at quasi-random interior centres with r = min(0.3 dist(y, dD), 0.25 diam D).
inline std::vector<BumpTestFunction> suite_bumps(const GridFunction& u, const Domain& D, int n_bumps,
                                                 const WeakformOptions& opt = {}) {
    if (n_bumps < 1) throw ConfigError("n_bumps must be at least 1");
    auto [lo, hi] = D.bounding_box();
    const double diam = D.geometry_constants().diameter;
    std::vector<BumpTestFunction> out;
    for (std::size_t i = 1; out.size() < static_cast<std::size_t>(n_bumps); ++i) {
        if (i > 100000) throw ConfigError("could not place the requested bumps on this grid");
        Point y = halton(i, D.dim());
        for (std::size_t j = 0; j < y.size(); ++j) y[j] = lo[j] + y[j] * (hi[j] - lo[j]);
        const double sd = D.signed_distance(y);
        if (!(sd < 0.0)) continue;
        const double r = std::min(0.3 * -sd, 0.25 * diam);
        if (2.0 * r / u.spacing() < opt.min_nodes_across) continue;
        out.push_back(BumpTestFunction{y, r});
    }
    return out;
}

struct SuiteReport {
    std::vector<ResidualReport> reports;
    bool pass = false;
};

inline SuiteReport residual_suite(const GridFunction& u, const ProblemSpec& spec, int n_bumps,
                                  const WeakformOptions& opt = {}) {
    SuiteReport s;
    for (const auto& phi : suite_bumps(u, spec.D, n_bumps, opt)) s.reports.push_back(assemble_residual(u, phi, spec, opt));
    s.pass = std::all_of(s.reports.begin(), s.reports.end(), [](const ResidualReport& r) { return r.pass; });
    return s;
}

}  // namespace cvp
