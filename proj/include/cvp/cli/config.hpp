#pragma once

// Run configuration: a YAML document with sections problem, solve and one block
// per check. Every value is validated at load; errors carry file:line:column and
// the dotted key.

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "cvp/domain.hpp"
#include "cvp/error.hpp"
#include "cvp/expr.hpp"
#include "cvp/fk.hpp"
#include "cvp/kernels.hpp"
#include "cvp/weakform.hpp"

namespace cvp::cli {

/// FNV-1a, 64-bit.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

struct SamplerCheckConfig {
    std::vector<int> dims{1, 2};
    std::vector<double> alphas{0.5, 1.0, 1.5};
    std::vector<double> amplitudes{1.0, 2.0};
    std::vector<double> xi{0.25, 0.5, 1.0, 2.0, 4.0};
    double t = 1.0;
    std::size_t samples = 1'000'000;
    double tolerance = 5e-3;
    bool include_gaussian = false;
};

struct DiagnoseConfig {
    std::vector<double> nu_grid = default_nu_grid();
};

struct BoundCheckConfig {
    int d = 2;
    double alpha = 1.0;
    double p = 2.0;
    std::string mu = "1";
    double support_radius = 1.0;
    Point x;
    std::vector<double> t_grid{1.0, 0.25, 0.0625, 0.015625};
    double C = 1.0;
};

struct KernelsCheckConfig {
    std::vector<double> pv_alphas{0.5, 1.0, 1.5};
    std::vector<double> pv_xi{0.5, 1.0, 2.0};
    double pv_tolerance = 0.01;
    std::vector<BoundCheckConfig> bounds;  // defaults: d = 1 and d = 2, indicator of the unit ball
};

struct WeakformCheckConfig {
    std::string source = "fd-oracle";  // fd-oracle | expression | solver
    std::string u;                     // candidate for source = expression
    double hx = 1.0 / 512.0;
    int n_bumps = 5;
    int k = 4;                         // ladder level for source = solver
    double corrupt = 0.0;              // adds corrupt * x1^2 inside D
};

struct BoundaryProbeConfig {
    Point z;
    std::vector<double> radii{0.4, 0.2, 0.1, 0.05, 0.025};
    int k = 2;
};

struct RunConfig {
    std::string source = "<defaults>";
    std::uint64_t seed = 1;
    std::optional<ProblemSpec> problem;
    SolveConfig solve;
    SamplerCheckConfig samplers;
    DiagnoseConfig diagnose;
    KernelsCheckConfig kernels;
    WeakformCheckConfig weakform;
    BoundaryProbeConfig boundary;
    std::string canonical;  // effective configuration, emitted as YAML
    std::uint64_t hash = 0; // fnv1a(canonical)
};

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::optional<std::vector<int>> k_ladder;
};

namespace detail {

class Loader {
public:
    explicit Loader(std::string file) : file_(std::move(file)) {}

    [[noreturn]] void fail(const YAML::Node& n, const std::string& key, const std::string& msg) const {
        std::ostringstream os;
        os << file_;
        if (n.IsDefined() && !n.IsNull() && n.Mark().line >= 0) os << ":" << n.Mark().line + 1 << ":" << n.Mark().column + 1;
        os << ": " << key << ": " << msg;
        throw ConfigError(os.str());
    }

    void expect_map(const YAML::Node& n, const std::string& key, std::initializer_list<const char*> allowed) const {
        if (!n.IsMap()) fail(n, key, "expected a mapping");
        const std::set<std::string> ok(allowed.begin(), allowed.end());
        for (const auto& kv : n) {
            const auto name = kv.first.as<std::string>();
            if (!ok.count(name)) fail(kv.first, key.empty() ? name : key + "." + name, "unknown key");
        }
    }

    template <typename T>
    T scalar(const YAML::Node& n, const std::string& key) const {
        if (!n.IsScalar()) fail(n, key, "expected a scalar");
        try {
            return n.as<T>();
        } catch (const YAML::Exception&) {
            fail(n, key, "cannot read '" + n.Scalar() + "' as " + type_name<T>());
        }
    }

    template <typename T>
    void read(const YAML::Node& parent, const char* name, const std::string& path, T& out) const {
        const YAML::Node n = parent[name];
        if (!n.IsDefined() || n.IsNull()) return;
        out = scalar<T>(n, join(path, name));
    }

    template <typename T>
    void read_list(const YAML::Node& parent, const char* name, const std::string& path, std::vector<T>& out) const {
        const YAML::Node n = parent[name];
        if (!n.IsDefined() || n.IsNull()) return;
        const std::string key = join(path, name);
        if (!n.IsSequence()) fail(n, key, "expected a list");
        out.clear();
        for (std::size_t i = 0; i < n.size(); ++i) out.push_back(scalar<T>(n[i], key + "[" + std::to_string(i) + "]"));
    }

    Point point(const YAML::Node& n, const std::string& key, int dim) const {
        if (!n.IsSequence()) fail(n, key, "expected a list of coordinates");
        Point x;
        for (std::size_t i = 0; i < n.size(); ++i) x.push_back(scalar<double>(n[i], key + "[" + std::to_string(i) + "]"));
        if (dim > 0 && static_cast<int>(x.size()) != dim)
            fail(n, key, "expected " + std::to_string(dim) + " coordinates, got " + std::to_string(x.size()));
        return x;
    }

    Expression expression(const YAML::Node& n, const std::string& key, int dim) const {
        const auto text = scalar<std::string>(n, key);
        try {
            return parse(text, dim);
        } catch (const ParseError& e) {
            fail(n, key, e.what());
        } catch (const ConfigError& e) {
            fail(n, key, e.what());
        }
    }

    VectorExpression vector_expression(const YAML::Node& n, const std::string& key, int dim) const {
        if (!n.IsSequence()) fail(n, key, "expected a list of " + std::to_string(dim) + " expressions");
        if (static_cast<int>(n.size()) != dim)
            fail(n, key, "expected " + std::to_string(dim) + " components, got " + std::to_string(n.size()));
        std::vector<std::string> texts;
        for (std::size_t i = 0; i < n.size(); ++i) {
            expression(n[i], key + "[" + std::to_string(i) + "]", dim);
            texts.push_back(n[i].as<std::string>());
        }
        return VectorExpression::parse(texts, dim);
    }

    Domain domain(const YAML::Node& n, const std::string& key) const {
        expect_map(n, key, {"ball", "box", "polytope"});
        if (n.size() != 1) fail(n, key, "expected exactly one of ball, box, polytope");
        try {
            if (const auto b = n["ball"]) {
                expect_map(b, key + ".ball", {"center", "radius"});
                return Domain(Ball{point(b["center"], key + ".ball.center", 0), scalar<double>(b["radius"], key + ".ball.radius")});
            }
            if (const auto b = n["box"]) {
                expect_map(b, key + ".box", {"lo", "hi"});
                return Domain(Box{point(b["lo"], key + ".box.lo", 0), point(b["hi"], key + ".box.hi", 0)});
            }
            const auto p = n["polytope"];
            if (!p.IsSequence()) fail(p, key + ".polytope", "expected a list of faces");
            Polytope poly;
            for (std::size_t i = 0; i < p.size(); ++i) {
                const std::string fk = key + ".polytope[" + std::to_string(i) + "]";
                expect_map(p[i], fk, {"normal", "offset"});
                poly.faces.push_back(HalfSpace{point(p[i]["normal"], fk + ".normal", 0), scalar<double>(p[i]["offset"], fk + ".offset")});
            }
            return Domain(std::move(poly));
        } catch (const ConfigError& e) {
            if (std::string(e.what()).rfind(file_, 0) == 0) throw;
            fail(n, key, e.what());
        }
    }

    static std::string join(const std::string& path, const char* name) { return path.empty() ? name : path + "." + name; }

private:
    template <typename T>
    static const char* type_name() {
        if constexpr (std::is_same_v<T, std::string>) return "a string";
        else if constexpr (std::is_same_v<T, bool>) return "a boolean";
        else if constexpr (std::is_floating_point_v<T>) return "a number";
        else return "an integer";
    }

    std::string file_;
};

}  // namespace detail

inline RunConfig load_config(const YAML::Node& root, const std::string& source, const Overrides& ov = {}) {
    const detail::Loader L(source);
    RunConfig cfg;
    cfg.source = source;
    const bool empty = !root.IsDefined() || root.IsNull();
    // Read from the parsed node (Clone drops source marks); emit from the copy.
    const YAML::Node in = empty ? YAML::Node(YAML::NodeType::Map) : root;
    YAML::Node doc = empty ? YAML::Node(YAML::NodeType::Map) : YAML::Clone(root);
    L.expect_map(in, "", {"seed", "problem", "solve", "validate_samplers", "diagnose", "kernels_check", "weakform_check",
                           "boundary_probe"});
    L.read(in, "seed", "", cfg.seed);

    if (const auto pn = in["problem"]) {
        L.expect_map(pn, "problem", {"domain", "alpha", "a", "p", "b", "c", "b_hat", "h", "f", "g", "extension",
                                     "allow_zero_amplitude"});
        if (!pn["domain"]) L.fail(pn, "problem.domain", "missing");
        ProblemSpec spec(L.domain(pn["domain"], "problem.domain"));
        const int d = spec.dim();
        L.read(pn, "alpha", "problem", spec.noise.alpha);
        L.read(pn, "a", "problem", spec.noise.a);
        L.read(pn, "p", "problem", spec.p);
        L.read(pn, "allow_zero_amplitude", "problem", spec.allow_zero_amplitude);
        if (!(spec.noise.alpha > 0.0 && spec.noise.alpha < 2.0)) L.fail(pn["alpha"], "problem.alpha", "must lie in (0, 2)");
        if (!(spec.noise.a >= 0.0)) L.fail(pn["a"], "problem.a", "must be non-negative");
        if (spec.noise.a == 0.0 && !spec.allow_zero_amplitude)
            L.fail(pn["a"], "problem.a", "a = 0 needs allow_zero_amplitude: true");
        if (!(spec.p > 0.5 * d)) L.fail(pn["p"], "problem.p", "must exceed d/2");
        if (pn["b"]) spec.b = L.vector_expression(pn["b"], "problem.b", d);
        if (pn["b_hat"]) spec.b_hat = L.vector_expression(pn["b_hat"], "problem.b_hat", d);
        if (pn["c"]) spec.c = L.expression(pn["c"], "problem.c", d);
        if (pn["h"]) spec.h = L.expression(pn["h"], "problem.h", d);
        if (pn["f"]) spec.f = L.expression(pn["f"], "problem.f", d);
        if (pn["g"]) spec.g = L.expression(pn["g"], "problem.g", d);
        if (pn["extension"]) {
            const auto e = L.scalar<std::string>(pn["extension"], "problem.extension");
            if (e == "natural") spec.extension = Extension::Natural;
            else if (e == "zero") spec.extension = Extension::Zero;
            else L.fail(pn["extension"], "problem.extension", "expected natural or zero");
        }
        spec.noise.d = d;
        cfg.problem.emplace(std::move(spec));
    }

    SolveConfig& s = cfg.solve;
    if (const auto sn = in["solve"]) {
        L.expect_map(sn, "solve", {"k_ladder", "n_paths", "dt", "dt_boundary_factor", "t_max", "probe_points",
                                   "extrapolation_tol", "mollifier_points", "rate_grid_spacing",
                                   "max_failure_fraction", "threads"});
        L.read_list(sn, "k_ladder", "solve", s.k_ladder);
        L.read(sn, "n_paths", "solve", s.n_paths);
        L.read(sn, "dt", "solve", s.path.dt);
        L.read(sn, "dt_boundary_factor", "solve", s.path.dt_boundary_factor);
        L.read(sn, "t_max", "solve", s.path.t_max);
        L.read(sn, "extrapolation_tol", "solve", s.extrapolation_tol);
        L.read(sn, "mollifier_points", "solve", s.mollifier_points);
        L.read(sn, "rate_grid_spacing", "solve", s.rate_grid_spacing);
        L.read(sn, "max_failure_fraction", "solve", s.max_failure_fraction);
        L.read(sn, "threads", "solve", s.threads);
        if (const auto pp = sn["probe_points"]) {
            if (!pp.IsSequence()) L.fail(pp, "solve.probe_points", "expected a list of points");
            const int d = cfg.problem ? cfg.problem->dim() : 0;
            for (std::size_t i = 0; i < pp.size(); ++i) {
                const std::string key = "solve.probe_points[" + std::to_string(i) + "]";
                s.probe_points.push_back(L.point(pp[i], key, d));
                if (cfg.problem && !(cfg.problem->D.signed_distance(s.probe_points.back()) < 0.0))
                    L.fail(pp[i], key, "probe points must lie strictly inside D");
            }
        }
    }
    if (ov.paths) s.n_paths = *ov.paths;
    if (ov.k_ladder) s.k_ladder = *ov.k_ladder;
    if (ov.seed) cfg.seed = *ov.seed;
    s.seed = cfg.seed;
    {
        const YAML::Node sn = in["solve"];
        for (std::size_t i = 0; i < s.k_ladder.size(); ++i) {
            if (s.k_ladder[i] < 1) L.fail(sn ? sn["k_ladder"] : sn, "solve.k_ladder", "entries must be >= 1");
            if (i > 0 && s.k_ladder[i] <= s.k_ladder[i - 1])
                L.fail(sn ? sn["k_ladder"] : sn, "solve.k_ladder", "must be strictly increasing");
        }
        if (s.k_ladder.empty()) L.fail(sn, "solve.k_ladder", "must be non-empty");
        if (s.n_paths < 2) L.fail(sn ? sn["n_paths"] : sn, "solve.n_paths", "must be at least 2");
        try {
            if (cfg.problem) {
                s.validate(cfg.problem->D);
                cfg.problem->validate();
            } else {
                s.path.validate();
            }
        } catch (const ConfigError& e) {
            L.fail(sn, "solve", e.what());
        }
    }

    if (const auto vn = in["validate_samplers"]) {
        auto& v = cfg.samplers;
        L.expect_map(vn, "validate_samplers",
                     {"dims", "alphas", "amplitudes", "xi", "t", "samples", "tolerance", "include_gaussian"});
        L.read_list(vn, "dims", "validate_samplers", v.dims);
        L.read_list(vn, "alphas", "validate_samplers", v.alphas);
        L.read_list(vn, "amplitudes", "validate_samplers", v.amplitudes);
        L.read_list(vn, "xi", "validate_samplers", v.xi);
        L.read(vn, "t", "validate_samplers", v.t);
        L.read(vn, "samples", "validate_samplers", v.samples);
        L.read(vn, "tolerance", "validate_samplers", v.tolerance);
        L.read(vn, "include_gaussian", "validate_samplers", v.include_gaussian);
        for (int d : v.dims)
            if (d < 1) L.fail(vn["dims"], "validate_samplers.dims", "dimensions must be positive");
        for (double a : v.alphas)
            if (!(a > 0.0 && a < 2.0)) L.fail(vn["alphas"], "validate_samplers.alphas", "must lie in (0, 2)");
        for (double a : v.amplitudes)
            if (!(a >= 0.0)) L.fail(vn["amplitudes"], "validate_samplers.amplitudes", "must be non-negative");
        if (!(v.t > 0.0)) L.fail(vn["t"], "validate_samplers.t", "must be positive");
        if (v.samples < 2) L.fail(vn["samples"], "validate_samplers.samples", "must be at least 2");
    }

    if (const auto dn = in["diagnose"]) {
        L.expect_map(dn, "diagnose", {"nu_grid"});
        L.read_list(dn, "nu_grid", "diagnose", cfg.diagnose.nu_grid);
        for (double nu : cfg.diagnose.nu_grid)
            if (!(nu > 0.0)) L.fail(dn["nu_grid"], "diagnose.nu_grid", "entries must be positive");
    }

    auto& kc = cfg.kernels;
    if (const auto kn = in["kernels_check"]) {
        L.expect_map(kn, "kernels_check", {"pv_alphas", "pv_xi", "pv_tolerance", "bounds"});
        L.read_list(kn, "pv_alphas", "kernels_check", kc.pv_alphas);
        L.read_list(kn, "pv_xi", "kernels_check", kc.pv_xi);
        L.read(kn, "pv_tolerance", "kernels_check", kc.pv_tolerance);
        for (double a : kc.pv_alphas)
            if (!(a > 0.0 && a < 2.0)) L.fail(kn["pv_alphas"], "kernels_check.pv_alphas", "must lie in (0, 2)");
        if (const auto ln = kn["bounds"]) {
            if (!ln.IsSequence()) L.fail(ln, "kernels_check.bounds", "expected a list");
            for (std::size_t i = 0; i < ln.size(); ++i) {
                const std::string key = "kernels_check.bounds[" + std::to_string(i) + "]";
                L.expect_map(ln[i], key, {"d", "alpha", "p", "mu", "support_radius", "x", "t_grid", "C"});
                BoundCheckConfig lc;
                L.read(ln[i], "d", key, lc.d);
                L.read(ln[i], "alpha", key, lc.alpha);
                L.read(ln[i], "p", key, lc.p);
                L.read(ln[i], "mu", key, lc.mu);
                L.read(ln[i], "support_radius", key, lc.support_radius);
                L.read(ln[i], "C", key, lc.C);
                L.read_list(ln[i], "t_grid", key, lc.t_grid);
                if (lc.d < 1 || lc.d > 3) L.fail(ln[i], key + ".d", "must be 1, 2 or 3");
                lc.x = ln[i]["x"] ? L.point(ln[i]["x"], key + ".x", lc.d) : Point(static_cast<std::size_t>(lc.d), 0.0);
                try {
                    parse(lc.mu, lc.d);
                    ExponentBundle::make(lc.d, lc.alpha, lc.p);
                } catch (const std::exception& e) {
                    L.fail(ln[i], key, e.what());
                }
                kc.bounds.push_back(lc);
            }
        }
    }
    if (kc.bounds.empty()) {
        BoundCheckConfig one;
        one.d = 1;
        one.p = 2.0;
        one.x = {0.0};
        one.t_grid = {1.0};
        kc.bounds.push_back(one);
        BoundCheckConfig two;
        two.x = {0.0, 0.0};
        kc.bounds.push_back(two);
    }

    if (const auto wn = in["weakform_check"]) {
        auto& w = cfg.weakform;
        L.expect_map(wn, "weakform_check", {"source", "u", "hx", "n_bumps", "k", "corrupt"});
        L.read(wn, "source", "weakform_check", w.source);
        L.read(wn, "u", "weakform_check", w.u);
        L.read(wn, "hx", "weakform_check", w.hx);
        L.read(wn, "n_bumps", "weakform_check", w.n_bumps);
        L.read(wn, "k", "weakform_check", w.k);
        L.read(wn, "corrupt", "weakform_check", w.corrupt);
        if (w.source != "fd-oracle" && w.source != "expression" && w.source != "solver")
            L.fail(wn["source"], "weakform_check.source", "expected fd-oracle, expression or solver");
        if (w.source == "expression") {
            if (!cfg.problem) L.fail(wn, "weakform_check.u", "needs a problem section");
            L.expression(wn["u"], "weakform_check.u", cfg.problem->dim());
        }
        if (w.source == "fd-oracle" && cfg.problem) {
            const auto* box = std::get_if<Box>(&cfg.problem->D.shape());
            if (cfg.problem->dim() != 1 || !box) L.fail(wn["source"], "weakform_check.source", "fd-oracle needs a 1-D box domain");
            const double n = (box->hi[0] - box->lo[0]) / w.hx;
            if (std::abs(n - std::round(n)) > 1e-9 * n) L.fail(wn["hx"], "weakform_check.hx", "must divide the interval");
        }
        if (!(w.hx > 0.0)) L.fail(wn["hx"], "weakform_check.hx", "must be positive");
        if (w.n_bumps < 1) L.fail(wn["n_bumps"], "weakform_check.n_bumps", "must be at least 1");
        if (w.k < 1) L.fail(wn["k"], "weakform_check.k", "must be at least 1");
    }

    if (const auto bn = in["boundary_probe"]) {
        auto& b = cfg.boundary;
        L.expect_map(bn, "boundary_probe", {"z", "radii", "k"});
        if (!cfg.problem) L.fail(bn, "boundary_probe", "needs a problem section");
        if (bn["z"]) {
            b.z = L.point(bn["z"], "boundary_probe.z", cfg.problem->dim());
            if (std::abs(cfg.problem->D.signed_distance(b.z)) > 1e-9) L.fail(bn["z"], "boundary_probe.z", "must lie on the boundary of D");
        }
        L.read_list(bn, "radii", "boundary_probe", b.radii);
        L.read(bn, "k", "boundary_probe", b.k);
        if (b.radii.size() < 3) L.fail(bn["radii"], "boundary_probe.radii", "needs at least three radii");
        for (double r : b.radii)
            if (!(r > 0.0)) L.fail(bn["radii"], "boundary_probe.radii", "radii must be positive");
        if (!b.z.empty()) {
            const Point n = cfg.problem->D.outward_normal(b.z);
            for (double r : b.radii) {
                Point x = b.z;
                for (std::size_t i = 0; i < x.size(); ++i) x[i] -= r * n[i];
                if (!cfg.problem->D.contains(x)) L.fail(bn["radii"], "boundary_probe.radii", "z - r n leaves D for r = " + std::to_string(r));
            }
        }
    }

    // Canonical text of the effective configuration.
    doc["seed"] = cfg.seed;
    if (ov.paths || ov.k_ladder) {
        YAML::Node sn = doc["solve"];
        if (!sn.IsMap()) sn = YAML::Node(YAML::NodeType::Map);
        if (ov.paths) sn["n_paths"] = *ov.paths;
        if (ov.k_ladder) {
            YAML::Node list(YAML::NodeType::Sequence);
            for (int k : *ov.k_ladder) list.push_back(k);
            sn["k_ladder"] = list;
        }
        doc["solve"] = sn;
    }
    YAML::Emitter em;
    em << doc;
    cfg.canonical = em.c_str();
    cfg.hash = fnv1a(cfg.canonical);
    return cfg;
}

inline RunConfig load_config_text(const std::string& text, const std::string& source, const Overrides& ov = {}) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ":" + std::to_string(e.mark.column + 1) +
                          ": " + e.msg);
    }
    return load_config(root, source, ov);
}

inline RunConfig load_config_file(const std::string& path, const Overrides& ov = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    std::stringstream ss;
    ss << in.rdbuf();
    return load_config_text(ss.str(), path, ov);
}

}  // namespace cvp::cli
