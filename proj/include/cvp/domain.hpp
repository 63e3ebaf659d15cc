#pragma once

// Bounded open domains D (ball, box, convex polytope). The boundary belongs to
// the complement, so a point with signed_distance == 0 is outside.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cvp/error.hpp"

namespace cvp {

using Point = std::vector<double>;

inline double norm(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

struct Ball {
    Point center;
    double radius;
};

struct Box {
    Point lo;
    Point hi;
};

struct HalfSpace {
    Point normal;   // interior is normal . x < offset
    double offset;
};

struct Polytope {
    std::vector<HalfSpace> faces;
};

struct GeometryConstants {
    double varsigma;  // sup_{x in D} |x|
    double diameter;
};

namespace detail {

// Solve the square system A x = b by Gaussian elimination with partial pivoting.
// Returns nullopt when A is numerically singular.
inline std::optional<Point> solve_small(std::vector<std::vector<double>> a, Point b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        if (std::abs(a[piv][col]) < 1e-12) return std::nullopt;
        std::swap(a[piv], a[col]);
        std::swap(b[piv], b[col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    Point x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t c = i + 1; c < n; ++c) s -= a[i][c] * x[c];
        x[i] = s / a[i][i];
    }
    return x;
}

template <typename F>
void for_each_subset(std::size_t n, std::size_t k, F&& f) {
    if (k > n) return;
    std::vector<std::size_t> idx(k);
    std::iota(idx.begin(), idx.end(), 0);
    for (;;) {
        f(std::span<const std::size_t>(idx));
        std::size_t i = k;
        while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
        if (i == 0) return;
        ++idx[i - 1];
        for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
}

}  // namespace detail

class Domain {
public:
    using Shape = std::variant<Ball, Box, Polytope>;

    explicit Domain(Ball b) : shape_(std::move(b)) {
        const auto& s = std::get<Ball>(shape_);
        if (s.center.empty()) throw ConfigError("ball center must be non-empty");
        if (!(s.radius > 0.0)) throw ConfigError("ball radius must be positive");
        dim_ = static_cast<int>(s.center.size());
        finish();
    }
    explicit Domain(Box b) : shape_(std::move(b)) {
        const auto& s = std::get<Box>(shape_);
        if (s.lo.empty() || s.lo.size() != s.hi.size()) throw ConfigError("box corners must have equal, positive dimension");
        for (std::size_t i = 0; i < s.lo.size(); ++i)
            if (!(s.lo[i] < s.hi[i])) throw ConfigError("box requires lo < hi componentwise");
        dim_ = static_cast<int>(s.lo.size());
        finish();
    }
    explicit Domain(Polytope p) : shape_(std::move(p)) {
        auto& s = std::get<Polytope>(shape_);
        if (s.faces.empty()) throw ConfigError("polytope needs at least one half-space");
        dim_ = static_cast<int>(s.faces.front().normal.size());
        for (auto& f : s.faces) {
            if (static_cast<int>(f.normal.size()) != dim_) throw ConfigError("polytope normals differ in dimension");
            const double n = norm(f.normal);
            if (!(n > 0.0)) throw ConfigError("polytope normal must be non-zero");
            for (double& v : f.normal) v /= n;
            f.offset /= n;
        }
        enumerate_vertices();
        finish();
    }

    int dim() const noexcept { return dim_; }
    const Shape& shape() const noexcept { return shape_; }

    bool contains(std::span<const double> x) const { return signed_distance(x) < 0.0; }

    /// Negative inside, positive outside, zero on the boundary. Exact for balls,
    /// boxes and the interior of polytopes; a lower bound of the true distance
    /// outside a polytope.
    double signed_distance(std::span<const double> x) const {
        return std::visit([&](const auto& s) { return sdf(s, x); }, shape_);
    }

    GeometryConstants geometry_constants() const { return geometry_; }

    /// Radius of a ball around the origin containing D.
    double outer_radius() const { return geometry_.varsigma; }

    /// Componentwise bounding box of D.
    std::pair<Point, Point> bounding_box() const { return {bbox_lo_, bbox_hi_}; }

    /// Outward unit normal at (or nearest to) boundary point z.
    Point outward_normal(std::span<const double> z) const {
        return std::visit([&](const auto& s) { return normal_at(s, z); }, shape_);
    }

    /// Vertices of a polytope domain (empty for other shapes).
    const std::vector<Point>& vertices() const noexcept { return vertices_; }

private:
    static double sdf(const Ball& b, std::span<const double> x) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - b.center[i]) * (x[i] - b.center[i]);
        return std::sqrt(s) - b.radius;
    }
    static double sdf(const Box& b, std::span<const double> x) {
        double outside = 0.0, inside = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double c = 0.5 * (b.lo[i] + b.hi[i]);
            const double q = std::abs(x[i] - c) - 0.5 * (b.hi[i] - b.lo[i]);
            outside += q > 0.0 ? q * q : 0.0;
            inside = std::max(inside, q);
        }
        return outside > 0.0 ? std::sqrt(outside) : inside;
    }
    static double sdf(const Polytope& p, std::span<const double> x) {
        double m = -std::numeric_limits<double>::infinity();
        for (const auto& f : p.faces) m = std::max(m, dot(f.normal, x) - f.offset);
        return m;
    }

    static Point normal_at(const Ball& b, std::span<const double> z) {
        Point n(z.begin(), z.end());
        for (std::size_t i = 0; i < n.size(); ++i) n[i] -= b.center[i];
        const double r = norm(n);
        for (double& v : n) v /= r;
        return n;
    }
    static Point normal_at(const Box& b, std::span<const double> z) {
        std::size_t best = 0;
        double best_q = -std::numeric_limits<double>::infinity();
        double sign = 1.0;
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double c = 0.5 * (b.lo[i] + b.hi[i]);
            const double q = std::abs(z[i] - c) - 0.5 * (b.hi[i] - b.lo[i]);
            if (q > best_q) {
                best_q = q;
                best = i;
                sign = z[i] >= c ? 1.0 : -1.0;
            }
        }
        Point n(z.size(), 0.0);
        n[best] = sign;
        return n;
    }
    static Point normal_at(const Polytope& p, std::span<const double> z) {
        const HalfSpace* best = &p.faces.front();
        for (const auto& f : p.faces)
            if (dot(f.normal, z) - f.offset > dot(best->normal, z) - best->offset) best = &f;
        return best->normal;
    }

    void enumerate_vertices() {
        const auto& faces = std::get<Polytope>(shape_).faces;
        const auto d = static_cast<std::size_t>(dim_);
        // Vertices: feasible intersections of d tight constraints.
        detail::for_each_subset(faces.size(), d, [&](std::span<const std::size_t> idx) {
            std::vector<std::vector<double>> a;
            Point b;
            for (auto i : idx) {
                a.push_back(faces[i].normal);
                b.push_back(faces[i].offset);
            }
            auto v = detail::solve_small(a, b);
            if (!v) return;
            for (const auto& f : faces)
                if (dot(f.normal, *v) - f.offset > 1e-9) return;
            for (const auto& w : vertices_) {
                double dist = 0.0;
                for (std::size_t i = 0; i < d; ++i) dist = std::max(dist, std::abs(w[i] - (*v)[i]));
                if (dist < 1e-9) return;
            }
            vertices_.push_back(*v);
        });
        if (vertices_.size() < d + 1)
            throw ConfigError("polytope vertex enumeration failed: degenerate or empty half-space set");
        // Bounded iff the recession cone {v : N v <= 0} is {0}. The cone is
        // pointed (vertices exist), so it suffices to test its candidate
        // extreme rays, the null directions of d-1 tight constraints.
        auto in_cone = [&](const Point& v) {
            for (const auto& f : faces)
                if (dot(f.normal, v) > 1e-12) return false;
            return true;
        };
        detail::for_each_subset(faces.size(), d - 1, [&](std::span<const std::size_t> idx) {
            for (std::size_t pin = 0; pin < d; ++pin) {
                std::vector<std::vector<double>> a;
                Point b;
                for (auto i : idx) {
                    a.push_back(faces[i].normal);
                    b.push_back(0.0);
                }
                Point e(d, 0.0);
                e[pin] = 1.0;
                a.push_back(e);
                b.push_back(1.0);
                auto v = detail::solve_small(a, b);
                if (!v) continue;
                Point mv = *v;
                for (double& c : mv) c = -c;
                if (in_cone(*v) || in_cone(mv)) throw ConfigError("polytope is unbounded");
                break;
            }
        });
    }

    void finish() {
        const auto d = static_cast<std::size_t>(dim_);
        bbox_lo_.assign(d, 0.0);
        bbox_hi_.assign(d, 0.0);
        if (const auto* b = std::get_if<Ball>(&shape_)) {
            geometry_ = {norm(b->center) + b->radius, 2.0 * b->radius};
            for (std::size_t i = 0; i < d; ++i) {
                bbox_lo_[i] = b->center[i] - b->radius;
                bbox_hi_[i] = b->center[i] + b->radius;
            }
        } else if (const auto* bx = std::get_if<Box>(&shape_)) {
            double far = 0.0, diam = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                const double m = std::max(std::abs(bx->lo[i]), std::abs(bx->hi[i]));
                far += m * m;
                diam += (bx->hi[i] - bx->lo[i]) * (bx->hi[i] - bx->lo[i]);
            }
            geometry_ = {std::sqrt(far), std::sqrt(diam)};
            bbox_lo_ = bx->lo;
            bbox_hi_ = bx->hi;
        } else {
            double vs = 0.0, diam = 0.0;
            bbox_lo_.assign(d, std::numeric_limits<double>::infinity());
            bbox_hi_.assign(d, -std::numeric_limits<double>::infinity());
            for (const auto& v : vertices_) {
                vs = std::max(vs, norm(v));
                for (std::size_t i = 0; i < d; ++i) {
                    bbox_lo_[i] = std::min(bbox_lo_[i], v[i]);
                    bbox_hi_[i] = std::max(bbox_hi_[i], v[i]);
                }
                for (const auto& w : vertices_) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < d; ++i) s += (v[i] - w[i]) * (v[i] - w[i]);
                    diam = std::max(diam, std::sqrt(s));
                }
            }
            geometry_ = {vs, diam};
        }
    }

    Shape shape_;
    int dim_ = 0;
    std::vector<Point> vertices_;
    GeometryConstants geometry_{};
    Point bbox_lo_, bbox_hi_;
};

}  // namespace cvp
