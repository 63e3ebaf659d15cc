#pragma once

// Mollification by J_k(x) = k^d J(kx), J(x) = 1_{|x|<1} exp(-1/(1-|x|^2)) / Z.
//
// Convolutions are evaluated with a lattice rule whose nodes z lie on the fixed
// grid s*Z^d, s = 2 / (k * points_per_axis):
//
//   c_k(x) = sum_z c(z) J(k(x - z)) / sum_z J(k(x - z)).
//
// The nodes do not move with x, so c_k is a smooth function of x even for
// discontinuous c, and the divergence returned below is the exact derivative of
// the discrete field. Dividing by the discrete mass makes constants exact.

#include <cmath>
#include <map>
#include <mutex>
#include <span>
#include <vector>

#include "cvp/domain.hpp"
#include "cvp/error.hpp"
#include "cvp/expr.hpp"
#include "cvp/quadrature.hpp"

namespace cvp {

struct MollifierSpec {
    int k = 1;
    int points_per_axis = 0;  // lattice nodes across the support diameter; 0 picks a default for d

    static int default_points(int d) { return d == 1 ? 96 : d == 2 ? 64 : 32; }

    int resolved_points(int d) const { return points_per_axis > 0 ? points_per_axis : default_points(d); }

    void validate() const {
        if (k < 1) throw ConfigError("mollification level k must be >= 1");
        if (points_per_axis != 0 && points_per_axis < 8)
            throw ConfigError("mollifier quadrature needs at least 8 points per axis");
    }
};

/// Z = int_{|y|<1} exp(-1/(1-|y|^2)) dy, by radial Gauss quadrature.
inline double mollifier_normalization(int d) {
    static std::mutex m;
    static std::map<int, double> cache;
    std::lock_guard lock(m);
    if (auto it = cache.find(d); it != cache.end()) return it->second;
    const double radial = integrate_panels(
        [d](double r) { return std::pow(r, d - 1) * std::exp(-1.0 / (1.0 - r * r)); }, 0.0, 1.0, 256, 10);
    const double z = unit_sphere_area(d) * radial;
    cache.emplace(d, z);
    return z;
}

/// J_k(x).
inline double mollifier_value(std::span<const double> x, int k) {
    const int d = static_cast<int>(x.size());
    double r2 = 0.0;
    for (double v : x) r2 += (k * v) * (k * v);
    if (r2 >= 1.0) return 0.0;
    return std::pow(static_cast<double>(k), d) * std::exp(-1.0 / (1.0 - r2)) / mollifier_normalization(d);
}

/// How a coefficient given on D is continued to R^d before mollifying.
enum class Extension { Natural, Zero };

/// Mollified scalar or vector field. Immutable; evaluation is thread-safe.
class MollifiedField {
public:
    MollifiedField(const VectorExpression& base, MollifierSpec spec, const Domain* domain = nullptr,
                   Extension ext = Extension::Natural)
        : MollifiedField(base.components(), base.dim(), spec, domain, ext) {}

    MollifiedField(const Expression& base, MollifierSpec spec, const Domain* domain = nullptr,
                   Extension ext = Extension::Natural)
        : MollifiedField(std::vector<Expression>{base}, base.dim(), spec, domain, ext) {}

    int dim() const noexcept { return dim_; }
    int components() const noexcept { return static_cast<int>(base_.size()); }
    const MollifierSpec& spec() const noexcept { return spec_; }

    /// First component; the value for scalar fields.
    double operator()(std::span<const double> x) const {
        std::vector<double> out(static_cast<std::size_t>(components()));
        evaluate(x, out);
        return out[0];
    }

    void evaluate(std::span<const double> x, std::span<double> out) const {
        if (static_cast<int>(x.size()) != dim_) throw ConfigError("evaluation point has the wrong dimension");
        const auto m = static_cast<std::size_t>(components());
        std::vector<bool> exact(m);
        bool all_exact = true;
        for (std::size_t i = 0; i < m; ++i) {
            exact[i] = constant_near(i, x);
            if (exact[i]) out[i] = base_[i].constant_value();
            all_exact = all_exact && exact[i];
        }
        if (all_exact) return;
        std::vector<double> num(m, 0.0);
        double mass = 0.0;
        for_each_node(x, [&](std::span<const double> z, double w, std::span<const double>) {
            mass += w;
            for (std::size_t i = 0; i < m; ++i)
                if (!exact[i]) num[i] += extended(i, z) * w;
        });
        for (std::size_t i = 0; i < m; ++i)
            if (!exact[i]) out[i] = num[i] / mass;
    }

    /// sum_i d/dx_i of the mollified component i (requires components() == dim()).
    double divergence(std::span<const double> x) const {
        const auto d = static_cast<std::size_t>(dim());
        if (static_cast<std::size_t>(components()) != d)
            throw ConfigError("divergence needs a vector field with dim components");
        std::vector<bool> exact(d);
        bool all_exact = true;
        for (std::size_t i = 0; i < d; ++i) {
            exact[i] = constant_near(i, x);
            all_exact = all_exact && exact[i];
        }
        if (all_exact) return 0.0;
        // (N_i / M)' = (N_i' M - N_i M') / M^2, differentiating the kernel only.
        double mass = 0.0;
        std::vector<double> num(d, 0.0), dnum(d, 0.0), dmass(d, 0.0);
        for_each_node(x, [&](std::span<const double> z, double w, std::span<const double> grad) {
            mass += w;
            for (std::size_t i = 0; i < d; ++i) {
                dmass[i] += grad[i];
                if (exact[i]) continue;
                const double v = extended(i, z);
                num[i] += v * w;
                dnum[i] += v * grad[i];
            }
        });
        double div = 0.0;
        for (std::size_t i = 0; i < d; ++i)
            if (!exact[i]) div += (dnum[i] * mass - num[i] * dmass[i]) / (mass * mass);
        return div;
    }

private:
    MollifiedField(std::vector<Expression> base, int dim, MollifierSpec spec, const Domain* domain, Extension ext)
        : base_(std::move(base)), dim_(dim), spec_(spec), domain_(domain), ext_(ext) {
        spec_.validate();
        if (dim_ < 1 || base_.empty()) throw ConfigError("mollified field needs at least one component");
        if (ext_ == Extension::Zero && domain_ == nullptr) throw ConfigError("zero extension needs a domain");
        if (domain_ && domain_->dim() != dim_) throw ConfigError("field and domain dimensions differ");
        points_ = spec_.resolved_points(dim_);
    }

    // Constant component whose extension is the same constant on the whole support.
    bool constant_near(std::size_t i, std::span<const double> x) const {
        if (!base_[i].is_constant()) return false;
        if (ext_ == Extension::Natural) return true;
        return domain_->signed_distance(x) <= -1.0 / spec_.k;
    }

    double extended(std::size_t i, std::span<const double> z) const {
        if (ext_ == Extension::Zero && !domain_->contains(z)) return 0.0;
        return base_[i](z);
    }

    // Visits lattice nodes z with |k(x - z)| < 1, passing the unnormalized kernel
    // weight w = exp(-1/(1 - |k(x-z)|^2)) and its gradient with respect to x.
    template <typename Visit>
    void for_each_node(std::span<const double> x, Visit&& visit) const {
        const auto d = x.size();
        const double k = spec_.k;
        const double s = 2.0 / (k * points_);
        const double rad = 1.0 / k;
        std::vector<long> lo(d), hi(d), idx(d);
        for (std::size_t i = 0; i < d; ++i) {
            lo[i] = static_cast<long>(std::ceil((x[i] - rad) / s));
            hi[i] = static_cast<long>(std::floor((x[i] + rad) / s));
        }
        idx = lo;
        std::vector<double> z(d), grad(d);
        for (;;) {
            double r2 = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                z[i] = static_cast<double>(idx[i]) * s;
                const double y = k * (x[i] - z[i]);
                r2 += y * y;
            }
            if (r2 < 1.0) {
                const double q = 1.0 - r2;
                const double w = std::exp(-1.0 / q);
                for (std::size_t i = 0; i < d; ++i) grad[i] = w * (-2.0 * k * k * (x[i] - z[i]) / (q * q));
                visit(std::span<const double>(z), w, std::span<const double>(grad));
            }
            std::size_t i = 0;
            while (i < d && idx[i] == hi[i]) {
                idx[i] = lo[i];
                ++i;
            }
            if (i == d) break;
            ++idx[i];
        }
    }

    std::vector<Expression> base_;
    int dim_ = 0;
    MollifierSpec spec_;
    const Domain* domain_;
    Extension ext_;
    int points_ = 0;
};

}  // namespace cvp
