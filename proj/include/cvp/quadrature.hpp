#pragma once

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <vector>

#include "cvp/error.hpp"

namespace cvp {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [-1, 1] (Newton iteration on P_n).
inline QuadratureRule gauss_legendre(int n) {
    static std::mutex m;
    static std::map<int, QuadratureRule> cache;
    std::lock_guard lock(m);
    if (auto it = cache.find(n); it != cache.end()) return it->second;
    QuadratureRule r;
    r.nodes.resize(static_cast<std::size_t>(n));
    r.weights.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        r.nodes[static_cast<std::size_t>(i)] = -x;
        r.nodes[static_cast<std::size_t>(n - 1 - i)] = x;
        r.weights[static_cast<std::size_t>(i)] = w;
        r.weights[static_cast<std::size_t>(n - 1 - i)] = w;
    }
    if (n % 2 == 1) r.nodes[static_cast<std::size_t>(n / 2)] = 0.0;
    cache.emplace(n, r);
    return r;
}

/// Integrates f over [a, b] with `panels` equal panels of an n-point Gauss rule.
template <typename F>
double integrate_panels(F&& f, double a, double b, int panels, int n = 8) {
    const QuadratureRule g = gauss_legendre(n);
    const double h = (b - a) / panels;
    double s = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double mid = a + (p + 0.5) * h;
        for (std::size_t i = 0; i < g.nodes.size(); ++i) s += g.weights[i] * f(mid + 0.5 * h * g.nodes[i]);
    }
    return 0.5 * h * s;
}

/// Surface area of the unit sphere S^{d-1} in R^d.
inline double unit_sphere_area(int d) {
    return 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
}

/// Directions and weights on S^{d-1}; weights sum to unit_sphere_area(d).
/// d = 1: {+1, -1}; d = 2: trapezoid in angle; d = 3: Gauss in cos(theta) x trapezoid in phi.
/// The rule is symmetric under x -> -x.
struct SphereRule {
    int d = 1;
    std::vector<std::vector<double>> directions;
    std::vector<double> weights;
};

inline SphereRule sphere_rule(int d, int resolution) {
    SphereRule s;
    s.d = d;
    if (d == 1) {
        s.directions = {{1.0}, {-1.0}};
        s.weights = {1.0, 1.0};
    } else if (d == 2) {
        const int n = 2 * std::max(resolution, 2);
        for (int i = 0; i < n; ++i) {
            const double th = 2.0 * std::numbers::pi * (i + 0.5) / n;
            s.directions.push_back({std::cos(th), std::sin(th)});
            s.weights.push_back(2.0 * std::numbers::pi / n);
        }
    } else if (d == 3) {
        const int nphi = 2 * std::max(resolution, 2);
        const QuadratureRule g = gauss_legendre(std::max(resolution, 2));
        for (std::size_t k = 0; k < g.nodes.size(); ++k) {
            const double ct = g.nodes[k], st = std::sqrt(1.0 - ct * ct);
            for (int i = 0; i < nphi; ++i) {
                const double ph = 2.0 * std::numbers::pi * (i + 0.5) / nphi;
                s.directions.push_back({st * std::cos(ph), st * std::sin(ph), ct});
                s.weights.push_back(g.weights[k] * 2.0 * std::numbers::pi / nphi);
            }
        }
    } else {
        throw ConfigError("sphere quadrature is implemented for d <= 3");
    }
    return s;
}

}  // namespace cvp
