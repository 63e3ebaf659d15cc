#pragma once

// Batch front end. Each subcommand computes its tables and records in memory and
// writes them only once everything has succeeded:
//
//   <out>/<sub>[.<table>].csv    result tables, "#" header lines then a CSV body
//   <out>/<sub>.summary.jsonl    one JSON record per line
//   <out>/<sub>.config.yaml      effective configuration
//   <out>/<sub>.meta.json        timestamp and file list (the only non-reproducible file)
//
// Exit status: 0 success, 1 verdict FAIL, 2 configuration error, 3 numerical failure.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cvp/cli/config.hpp"
#include "cvp/reference/fd1d.hpp"
#include "cvp/stable.hpp"

namespace cvp::cli {

inline constexpr const char* kVersion = "cvp 1.0.0";

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string hex_hash(std::uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct Table {
    std::string name;  // empty for the main table
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }
};

struct Outcome {
    std::vector<Table> tables;
    std::vector<nlohmann::ordered_json> records;
    bool pass = true;
    std::string message;  // one-line human summary
};

namespace detail {

inline const ProblemSpec& need_problem(const RunConfig& cfg, const char* sub) {
    if (!cfg.problem) throw ConfigError(cfg.source + ": problem: " + sub + " needs a problem section");
    return *cfg.problem;
}

inline void need_probes(const RunConfig& cfg) {
    if (cfg.solve.probe_points.empty()) throw ConfigError(cfg.source + ": solve.probe_points: missing");
}

inline std::vector<std::string> coord_columns(int d, const char* prefix = "x") {
    std::vector<std::string> c;
    for (int i = 1; i <= d; ++i) c.push_back(prefix + std::to_string(i));
    return c;
}

inline void append(std::vector<std::string>& row, const Point& x) {
    for (double v : x) row.push_back(fmt(v));
}

inline nlohmann::ordered_json estimate_json(const Estimate& e) {
    return {{"mean", e.mean}, {"stderr", e.std_error}, {"n", e.n}, {"failures", e.failures},
            {"truncation_fraction", e.truncation_fraction}};
}

inline Outcome run_solve(const RunConfig& cfg) {
    const ProblemSpec& spec = need_problem(cfg, "solve");
    need_probes(cfg);
    const int d = spec.dim();
    const SolveResult res = solve(spec, cfg.solve);
    Outcome o;
    Table t;
    t.columns = coord_columns(d);
    for (const char* c : {"k", "u_mean", "u_stderr", "n_paths", "truncation_fraction", "converged"}) t.columns.push_back(c);
    const bool assessable = cfg.solve.k_ladder.size() >= 2;
    for (const auto& pr : res.probes) {
        for (const auto& e : pr.ladder) {
            std::vector<std::string> row;
            append(row, pr.x);
            row.push_back(std::to_string(e.k));
            row.push_back(fmt(e.mean));
            row.push_back(fmt(e.std_error));
            row.push_back(std::to_string(e.n));
            row.push_back(fmt(e.truncation_fraction));
            row.push_back(pr.converged_k && e.k >= *pr.converged_k ? "1" : "0");
            t.add(std::move(row));
        }
        nlohmann::ordered_json r{{"record", "probe"}, {"x", pr.x}};
        r["converged_k"] = pr.converged_k ? nlohmann::ordered_json(*pr.converged_k) : nlohmann::ordered_json(nullptr);
        r["u_star"] = estimate_json(pr.u_star);
        o.records.push_back(std::move(r));
        if (assessable && !pr.converged_k) o.pass = false;
    }
    o.tables.push_back(std::move(t));
    o.message = std::to_string(res.probes.size()) + " probes, " + (o.pass ? "ladder converged" : "ladder not converged");
    return o;
}

inline Outcome run_validate_samplers(const RunConfig& cfg) {
    const auto& v = cfg.samplers;
    Outcome o;
    Table t;
    t.columns = {"d", "alpha", "a", "t", "xi", "re", "im", "re_stderr", "analytic", "abs_error", "pass"};
    double worst = 0.0;
    std::uint64_t stream = 0;
    for (int d : v.dims)
        for (double alpha : v.alphas)
            for (double a : v.amplitudes) {
                const NoiseParams np{alpha, a, d};
                const bool gauss = v.include_gaussian;
                std::vector<double> tmp(static_cast<std::size_t>(d));
                VectorSampler sampler = [&](RngStream& rng, std::span<double> out) {
                    sample_stable_increment(np, v.t, rng, out);
                    if (gauss) {
                        sample_gaussian_increment(v.t, rng, tmp);
                        for (std::size_t i = 0; i < out.size(); ++i) out[i] += tmp[i];
                    }
                };
                for (double xi : v.xi) {
                    std::vector<double> xv(static_cast<std::size_t>(d), 0.0);
                    xv[0] = xi;
                    RngStream rng(cfg.seed, stream++);
                    const CharfnEstimate e = empirical_charfn(sampler, xv, v.samples, rng);
                    const double exact = analytic_charfn(np, v.t, std::abs(xi), gauss);
                    const double err = std::max(std::abs(e.re - exact), std::abs(e.im));
                    const bool ok = err <= v.tolerance;
                    worst = std::max(worst, err);
                    o.pass = o.pass && ok;
                    t.add({std::to_string(d), fmt(alpha), fmt(a), fmt(v.t), fmt(xi), fmt(e.re), fmt(e.im),
                           fmt(e.re_stderr), fmt(exact), fmt(err), ok ? "1" : "0"});
                }
            }
    o.tables.push_back(std::move(t));
    o.records.push_back({{"record", "verdict"}, {"max_abs_error", worst}, {"tolerance", v.tolerance}, {"pass", o.pass}});
    o.message = "max |error| " + fmt(worst) + (o.pass ? " PASS" : " FAIL");
    return o;
}

inline Outcome run_diagnose(const RunConfig& cfg) {
    const ProblemSpec& spec = need_problem(cfg, "diagnose-moments");
    need_probes(cfg);
    const MomentDiagnostics m = diagnose_moments(spec, cfg.solve, cfg.diagnose.nu_grid);
    Outcome o;
    Table t;
    t.columns = coord_columns(spec.dim());
    for (const char* c : {"quantity", "nu", "mean", "stderr", "top_share", "stable"}) t.columns.push_back(c);
    auto row = [&](const Point& x, const char* q, double nu, const Estimate& e, double share, bool stable) {
        std::vector<std::string> r;
        append(r, x);
        r.insert(r.end(), {q, fmt(nu), fmt(e.mean), fmt(e.std_error), fmt(share), stable ? "1" : "0"});
        t.add(std::move(r));
    };
    for (const auto& p : m.probes) {
        row(p.x, "occupation", 0.0, p.occupation, 0.0, true);
        row(p.x, "exit_time", 0.0, p.exit_time, 0.0, true);
        row(p.x, "exp_moment_8h", 0.0, p.exp_moment_8h.estimate, p.exp_moment_8h.top_share, p.exp_moment_8h.stable);
        for (std::size_t i = 0; i < p.nu_grid.size(); ++i) {
            const auto& me = p.exp_moment_nu_tau[i];
            row(p.x, "exp_moment_nu_tau", p.nu_grid[i], me.estimate, me.top_share, me.stable);
        }
        nlohmann::ordered_json r{{"record", "probe"}, {"x", p.x}, {"occupation", estimate_json(p.occupation)},
                                 {"exit_time", estimate_json(p.exit_time)},
                                 {"exp_moment_8h", estimate_json(p.exp_moment_8h.estimate)}};
        o.records.push_back(std::move(r));
    }
    o.records.push_back({{"record", "verdict"}, {"k", m.k}, {"occupation_bound", m.occupation_bound}, {"verdict", m.verdict}});
    o.pass = m.verdict == "weights-stable";
    o.tables.push_back(std::move(t));
    o.message = m.verdict;
    return o;
}

inline Outcome run_kernels_check(const RunConfig& cfg) {
    const auto& kc = cfg.kernels;
    Outcome o;
    Table pv;
    pv.name = "pv";
    pv.columns = {"d", "alpha", "phi", "xi", "value", "expected", "rel_error", "converged", "pass"};
    bool pv_pass = true;
    for (double alpha : kc.pv_alphas)
        for (double xi : kc.pv_xi) {
            const std::string phi = "cos(" + fmt(xi) + " * x1)";
            const PvReport r = frac_laplacian_pv(parse(phi, 1), std::vector<double>{0.0}, alpha);
            const double expected = -std::pow(std::abs(xi), alpha);
            const double rel = std::abs(r.value - expected) / std::max(std::abs(expected), 1e-300);
            const bool ok = rel <= kc.pv_tolerance;
            pv_pass = pv_pass && ok;
            pv.add({"1", fmt(alpha), "cos", fmt(xi), fmt(r.value), fmt(expected), fmt(rel), r.converged ? "1" : "0",
                    ok ? "1" : "0"});
        }
    o.records.push_back({{"record", "pv"}, {"pass", pv_pass}});

    Table lt;
    lt.name = "bounds";
    lt.columns = {"setup", "d", "alpha", "p", "table", "t", "lhs", "lhs_error", "shape", "ratio", "explicit", "pass"};
    bool bounds_pass = true;
    for (std::size_t i = 0; i < kc.bounds.size(); ++i) {
        const auto& lc = kc.bounds[i];
        KernelBoundSetup s;
        s.mu = parse(lc.mu, lc.d);
        s.support_radius = lc.support_radius;
        s.x = lc.x;
        s.t_grid = lc.t_grid;
        s.C = lc.C;
        const KernelBoundReport rep = check_kernel_bounds(lc.alpha, ExponentBundle::make(lc.d, lc.alpha, lc.p), s);
        for (const auto& tab : rep.tables)
            for (const auto& row : tab.rows)
                lt.add({std::to_string(i), std::to_string(lc.d), fmt(lc.alpha), fmt(lc.p), tab.name, fmt(row.t),
                        fmt(row.lhs), fmt(row.lhs_error), fmt(row.shape), fmt(row.ratio),
                        tab.explicit_constant ? "1" : "0", tab.pass ? "1" : "0"});
        o.records.push_back({{"record", "bounds"}, {"setup", i}, {"d", lc.d}, {"pass", rep.pass}});
        bounds_pass = bounds_pass && rep.pass;
    }
    o.records.push_back({{"record", "verdict"}, {"frac_constant_d1", frac_constant(1, 1.0)},
                         {"frac_constant_d2", frac_constant(2, 1.0)}, {"pass", pv_pass && bounds_pass}});
    o.pass = pv_pass && bounds_pass;
    o.tables.push_back(std::move(pv));
    o.tables.push_back(std::move(lt));
    o.message = std::string("pv ") + (pv_pass ? "PASS" : "FAIL") + ", bounds " + (bounds_pass ? "PASS" : "FAIL");
    return o;
}

inline reference::Fd1dProblem fd_problem(const ProblemSpec& spec) {
    const auto& box = std::get<Box>(spec.D.shape());
    reference::Fd1dProblem pb;
    pb.lo = box.lo[0];
    pb.hi = box.hi[0];
    pb.alpha = spec.noise.alpha;
    pb.a = spec.noise.a;
    pb.b = spec.b[0];
    pb.c = spec.c;
    pb.b_hat = spec.b_hat[0];
    pb.f = spec.f;
    pb.g = spec.g;
    return pb;
}

inline GridFunction weakform_candidate(const RunConfig& cfg, const ProblemSpec& spec) {
    const auto& w = cfg.weakform;
    const double eps = w.corrupt;
    auto corrupt = [eps](std::span<const double> x) { return eps * x[0] * x[0]; };
    if (w.source == "fd-oracle") {
        if (spec.dim() != 1 || !std::holds_alternative<Box>(spec.D.shape()))
            throw ConfigError(cfg.source + ": weakform_check.source: fd-oracle needs a 1-D box domain");
        auto sol = std::make_shared<reference::Fd1dSolution>(reference::solve_fd1d(fd_problem(spec), w.hx));
        return GridFunction::sample(spec.D, spec.g, w.hx,
                                    [sol, corrupt](std::span<const double> x) { return (*sol)(x[0]) + corrupt(x); });
    }
    if (w.source == "expression") {
        const Expression u = parse(w.u, spec.dim());
        return GridFunction::sample(spec.D, spec.g, w.hx, [u, corrupt](std::span<const double> x) { return u(x) + corrupt(x); });
    }
    // Monte Carlo candidate: one estimate per interior node, streams indexed by node order.
    auto cache = std::make_shared<std::map<Point, Estimate>>();
    SolveConfig sc = cfg.solve;
    auto est = [cache, sc, &spec, k = w.k](std::span<const double> x) -> const Estimate& {
        Point p(x.begin(), x.end());
        auto it = cache->find(p);
        if (it == cache->end()) it = cache->emplace(p, estimate_u(spec, sc, x, k, cache->size())).first;
        return it->second;
    };
    return GridFunction::sample(
        spec.D, spec.g, w.hx, [est, corrupt](std::span<const double> x) { return est(x).mean + corrupt(x); },
        [est](std::span<const double> x) { return est(x).std_error; });
}

inline Outcome run_weakform_check(const RunConfig& cfg) {
    const ProblemSpec& spec = need_problem(cfg, "weakform-check");
    spec.validate();
    const GridFunction u = weakform_candidate(cfg, spec);
    const SuiteReport suite = residual_suite(u, spec, cfg.weakform.n_bumps);
    const int d = spec.dim();
    Outcome o;
    Table t;
    t.columns = {"bump"};
    for (const auto& c : coord_columns(d, "y")) t.columns.push_back(c);
    for (const char* c : {"radius", "gradient", "fractional", "drift", "c_term", "b_hat_term", "f_term", "total",
                          "quadrature_error", "kernel_error", "tail_bound", "consistency", "mc_noise", "budget", "pass"})
        t.columns.push_back(c);
    double worst = 0.0;
    for (std::size_t i = 0; i < suite.reports.size(); ++i) {
        const auto& r = suite.reports[i];
        std::vector<std::string> row{std::to_string(i)};
        append(row, r.center);
        for (double v : {r.radius, r.terms.gradient, r.terms.fractional, r.terms.drift, r.terms.c_term,
                         r.terms.b_hat_term, r.terms.f_term, r.total, r.quadrature_error, r.kernel_error,
                         r.tail_bound, r.consistency, r.mc_noise, r.budget})
            row.push_back(fmt(v));
        row.push_back(r.pass ? "1" : "0");
        t.add(std::move(row));
        worst = std::max(worst, std::abs(r.total) / r.budget);
    }
    o.tables.push_back(std::move(t));
    o.records.push_back({{"record", "verdict"}, {"source", cfg.weakform.source}, {"bumps", suite.reports.size()},
                         {"worst_ratio", worst}, {"pass", suite.pass}});
    o.pass = suite.pass;
    o.message = "worst |R|/budget " + fmt(worst) + (o.pass ? " PASS" : " FAIL");
    return o;
}

inline Outcome run_boundary_probe(const RunConfig& cfg) {
    const ProblemSpec& spec = need_problem(cfg, "boundary-probe");
    if (cfg.boundary.z.empty()) throw ConfigError(cfg.source + ": boundary_probe.z: missing");
    const int k = cfg.boundary.k;
    const BoundaryProbeReport rep = boundary_continuity_probe(spec, cfg.solve, cfg.boundary.z, cfg.boundary.radii, k);
    Outcome o;
    Table t;
    t.columns = {"radius"};
    for (const auto& c : coord_columns(spec.dim())) t.columns.push_back(c);
    for (const char* c : {"u", "stderr", "gap"}) t.columns.push_back(c);
    for (const auto& r : rep.rows) {
        std::vector<std::string> row{fmt(r.radius)};
        append(row, r.x);
        row.insert(row.end(), {fmt(r.u.mean), fmt(r.u.std_error), fmt(r.gap)});
        t.add(std::move(row));
    }
    o.tables.push_back(std::move(t));
    o.records.push_back({{"record", "verdict"}, {"z", rep.z}, {"g_at_z", rep.g_at_z}, {"g_continuous", rep.g_continuous},
                         {"trend_slope", rep.trend_slope}, {"trend_t", rep.trend_t}, {"decreasing", rep.decreasing},
                         {"claim", rep.claim}});
    // A discontinuous g makes no claim, which is not a failure.
    o.pass = !rep.g_continuous || rep.decreasing;
    o.message = rep.claim ? "continuity claim: gap decreasing" : rep.g_continuous ? "no decreasing trend" : "g discontinuous at z: no claim";
    return o;
}

inline std::string csv_body(const Table& t) {
    std::string s;
    for (std::size_t i = 0; i < t.columns.size(); ++i) s += (i ? "," : "") + t.columns[i];
    s += "\n";
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) s += (i ? "," : "") + row[i];
        s += "\n";
    }
    return s;
}

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    f << text;
    if (!f) throw ConfigError(p.string() + ": cannot write");
}

}  // namespace detail

inline const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> names{"solve", "validate-samplers", "diagnose-moments",
                                                "kernels-check", "weakform-check", "boundary-probe"};
    return names;
}

/// Runs one subcommand on a loaded configuration. Throws on configuration or numerical errors.
inline Outcome execute(const std::string& sub, const RunConfig& cfg) {
    if (sub == "solve") return detail::run_solve(cfg);
    if (sub == "validate-samplers") return detail::run_validate_samplers(cfg);
    if (sub == "diagnose-moments") return detail::run_diagnose(cfg);
    if (sub == "kernels-check") return detail::run_kernels_check(cfg);
    if (sub == "weakform-check") return detail::run_weakform_check(cfg);
    if (sub == "boundary-probe") return detail::run_boundary_probe(cfg);
    throw ConfigError("unknown subcommand '" + sub + "'");
}

/// Writes the artifacts of one run and returns their paths.
inline std::vector<std::filesystem::path> write_artifacts(const std::string& sub, const RunConfig& cfg, const Outcome& o,
                                                          const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const std::string header = std::string("# version: ") + kVersion + "\n# config_hash: " + hex_hash(cfg.hash) +
                               "\n# seed: " + std::to_string(cfg.seed) + "\n";
    std::vector<fs::path> files;
    for (const auto& t : o.tables) {
        files.push_back(dir / (sub + (t.name.empty() ? "" : "." + t.name) + ".csv"));
        detail::write_file(files.back(), header + detail::csv_body(t));
    }
    std::string jsonl = nlohmann::ordered_json{{"record", "header"}, {"version", kVersion}, {"subcommand", sub},
                                               {"config_hash", hex_hash(cfg.hash)}, {"seed", cfg.seed}}
                            .dump() +
                        "\n";
    for (const auto& r : o.records) jsonl += r.dump() + "\n";
    files.push_back(dir / (sub + ".summary.jsonl"));
    detail::write_file(files.back(), jsonl);
    files.push_back(dir / (sub + ".config.yaml"));
    detail::write_file(files.back(), cfg.canonical + "\n");

    nlohmann::ordered_json meta{{"version", kVersion}, {"subcommand", sub}, {"config_hash", hex_hash(cfg.hash)},
                                {"seed", cfg.seed}, {"config", cfg.source}, {"timestamp", detail::utc_timestamp()}};
    for (const auto& f : files) meta["artifacts"].push_back(f.filename().string());
    files.push_back(dir / (sub + ".meta.json"));
    detail::write_file(files.back(), meta.dump(2) + "\n");
    return files;
}

/// Command-line entry point; args excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Monte Carlo solver and checks for mixed local/nonlocal Dirichlet problems", "cvp"};
    app.require_subcommand(1);
    std::string config_path, out_dir = ".";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::vector<int> k_ladder;
    bool quiet = false;
    app.add_option("--config", config_path, "YAML run configuration");
    app.add_option("--seed", seed, "override the seed");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--paths", paths, "override solve.n_paths");
    app.add_option("--k-ladder", k_ladder, "override solve.k_ladder")->delimiter(',');
    app.add_flag("--quiet", quiet, "print nothing on success");
    for (const auto& name : subcommands()) app.add_subcommand(name)->fallthrough();

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "cvp: " << e.what() << "\n";
        return 2;
    }
    const std::string sub = app.get_subcommands().front()->get_name();

    Overrides ov;
    ov.seed = seed;
    ov.paths = paths;
    if (!k_ladder.empty()) ov.k_ladder = k_ladder;
    try {
        const RunConfig cfg = config_path.empty() ? load_config(YAML::Node(), "<defaults>", ov)
                                                  : load_config_file(config_path, ov);
        const Outcome o = execute(sub, cfg);
        write_artifacts(sub, cfg, o, out_dir);
        if (!quiet || !o.pass) out << sub << ": " << o.message << "\n";
        return o.pass ? 0 : 1;
    } catch (const ConfigError& e) {
        err << "cvp: config error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        err << "cvp: config error: " << e.what() << "\n";
        return 2;
    } catch (const YAML::Exception& e) {
        err << "cvp: config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        err << "cvp: numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const EvalError& e) {
        err << "cvp: numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "cvp: " << e.what() << "\n";
        return 2;
    }
}

inline int run(int argc, char** argv) {
    return run(std::vector<std::string>(argv + 1, argv + argc));
}

}  // namespace cvp::cli
