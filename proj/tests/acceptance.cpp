// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "cvp/cli/app.hpp"
#include "cvp/fk.hpp"
#include "cvp/kernels.hpp"
#include "cvp/path.hpp"
#include "cvp/reference/fd1d.hpp"
#include "cvp/weakform.hpp"

using namespace cvp;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string num(double v, int digits = 4) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ProblemSpec unit_disk(double a = 1.0, double alpha = 1.0) {
    ProblemSpec s(Domain(Ball{{0.0, 0.0}, 1.0}));
    s.noise = {alpha, a, 2};
    s.allow_zero_amplitude = a == 0.0;
    return s;
}

ProblemSpec interval(double a = 1.0, double alpha = 1.0) {
    ProblemSpec s(Domain(Box{{-1.0}, {1.0}}));
    s.noise = {alpha, a, 1};
    return s;
}

SolveConfig paths(std::size_t n, double dt, std::uint64_t seed) {
    SolveConfig c;
    c.n_paths = n;
    c.path.dt = dt;
    c.seed = seed;
    return c;
}

Verdict ac1() {
    const auto t0 = std::chrono::steady_clock::now();
    ProblemSpec s = unit_disk();
    s.g = Expression::constant(2.5, 2);
    SolveConfig c = paths(10000, 1e-3, 101);
    c.probe_points = {{0.0, 0.0}, {0.5, -0.3}, {-0.9, 0.1}};
    const SolveResult r = solve(s, c);
    bool ok = true;
    std::size_t n = 0;
    for (const auto& p : r.probes)
        for (const auto& e : p.ladder) {
            ok = ok && e.mean == 2.5 && e.std_error == 0.0;
            ++n;
        }
    const double t = seconds_since(t0);
    return {ok && t < 60.0, std::to_string(n) + " estimates (3 probes x k in {2,4,8,16}) equal 2.5 with stderr 0; " +
                                num(t, 3) + " s"};
}

Verdict ac2() {
    const auto t0 = std::chrono::steady_clock::now();
    cli::RunConfig cfg = cli::load_config(YAML::Node(), "<defaults>");
    const cli::Outcome o = cli::execute("validate-samplers", cfg);
    double worst = 0.0;
    for (const auto& row : o.tables[0].rows) worst = std::max(worst, std::stod(row[9]));
    const double t = seconds_since(t0);
    return {o.pass && worst <= 5e-3 && t < 120.0,
            std::to_string(o.tables[0].rows.size()) + " charfn points, max |error| " + num(worst) +
                " (tolerance 5e-3, 1e6 samples); " + num(t, 3) + " s"};
}

Verdict ac3() {
    ProblemSpec s = unit_disk(0.0);
    s.f = Expression::constant(1.0, 2);
    const Estimate e = estimate_u(s, paths(100000, 1e-4, 103), std::vector<double>{0.0, 0.0}, 1);
    const double tol = 3.0 * e.std_error + 0.01;
    return {std::abs(e.mean - 0.25) <= tol, "E0[tau] = " + num(e.mean, 6) + " +- " + num(e.std_error, 2) +
                                                 ", oracle 0.25, tolerance " + num(tol, 3)};
}

Verdict ac4() {
    const Domain D(Box{{-1.0}, {1.0}});
    ProcessSpec proc;
    proc.noise = {1.0, 1.0, 1};
    proc.drift = VectorExpression::zero(1);
    proc.include_diffusion = false;
    PathConfig pc;
    pc.dt = 1e-4;
    pc.t_max = 100.0;
    const std::size_t n = 20000;
    std::vector<double> tau(n);
    const std::vector<double> x0{0.0};
    parallel_for(n, 0, [&](std::size_t i) {
        RngStream rng(104, i);
        tau[i] = simulate_to_exit(proc, D, pc, x0, rng).tau;
    });
    const Estimate e = summarize(tau);
    const double tol = 3.0 * e.std_error + 0.03;
    return {std::abs(e.mean - 1.0) <= tol, "E0[tau] = " + num(e.mean, 6) + " +- " + num(e.std_error, 2) +
                                                " (2e4 paths, dt 1e-4), oracle 1, tolerance " + num(tol, 3)};
}

Verdict ac5() {
    const auto t0 = std::chrono::steady_clock::now();
    ProblemSpec s = interval();
    s.f = Expression::constant(1.0, 1);
    const Estimate e = estimate_u(s, paths(100000, 1e-4, 105), std::vector<double>{0.0}, 1);
    const double t = seconds_since(t0);
    reference::Fd1dProblem pb;
    pb.f = Expression::constant(1.0, 1);
    const double fd = reference::solve_fd1d(pb, 1.0 / 512.0)(0.0);
    const double tol = 3.0 * e.std_error + 0.02;
    return {std::abs(e.mean - fd) <= tol && t < 300.0,
            "MC u(0) = " + num(e.mean, 6) + " +- " + num(e.std_error, 2) + ", FD u(0) = " + num(fd, 6) +
                ", tolerance " + num(tol, 3) + "; MC " + num(t, 3) + " s"};
}

Verdict ac6() {
    ProblemSpec s = unit_disk();
    s.g = Expression::constant(1.0, 2);
    const ProcessSpec proc = process_of(s);
    PathConfig pc;
    pc.dt = 1e-3;
    double worst = 0.0;
    const std::vector<double> x0{0.2, 0.1};
    for (double lambda : {0.5, 1.0, 2.0})
        for (std::size_t i = 0; i < 2000; ++i) {
            RngStream rng(106, i);
            const ExitSample smp = simulate_to_exit(proc, s.D, pc, x0, rng, [lambda](std::span<const double>) { return -lambda; });
            const double w = fk_payoff(smp, s.g), ref = std::exp(-lambda * smp.tau);
            worst = std::max(worst, std::abs(w - ref) / ref);
        }
    std::vector<Estimate> est;
    for (double lambda : {0.5, 1.0, 2.0}) {
        s.c = Expression::constant(-lambda, 2);
        est.push_back(estimate_u(s, paths(10000, 1e-3, 106), x0, 1));
    }
    bool mono = true;
    std::string chain;
    for (std::size_t i = 0; i < est.size(); ++i) {
        chain += (i ? " > " : "") + num(est[i].mean, 5);
        if (i) mono = mono && est[i - 1].mean - est[i].mean > 3.0 * combined_stderr(est[i - 1], est[i]);
    }
    return {worst <= 1e-12 && mono, "max relative weight error " + num(worst, 2) + "; u for lambda 0.5, 1, 2: " + chain};
}

Verdict ac7() {
    ProblemSpec s = interval();
    s.g = Expression::constant(1.0, 1);
    SolveConfig c = paths(10000, 1e-4, 107);
    c.rate_grid_spacing = 1e-3;
    const std::vector<double> x0{0.0};
    const std::vector<int> ks{2, 4, 8, 16};

    s.b_hat = VectorExpression::parse({"-0.5 * step(x1)"}, 1);
    std::vector<Estimate> step;
    for (int k : ks) step.push_back(estimate_u(s, c, x0, k));
    bool decreasing = true;
    std::string diffs;
    double prev = INFINITY;
    for (std::size_t i = 1; i < step.size(); ++i) {
        const double d = std::abs(step[i].mean - step[i - 1].mean);
        diffs += (i > 1 ? ", " : "") + num(d, 3);
        decreasing = decreasing && d < prev;
        prev = d;
    }

    s.b_hat = VectorExpression::parse({"-x1"}, 1);
    std::vector<Estimate> lin;
    for (int k : ks) lin.push_back(estimate_u(s, c, x0, k));
    bool flat = true;
    double worst = 0.0;
    for (std::size_t i = 1; i < lin.size(); ++i) {
        const double d = std::abs(lin[i].mean - lin[i - 1].mean);
        worst = std::max(worst, d);
        flat = flat && d <= 3.0 * combined_stderr(lin[i], lin[i - 1]);
    }
    return {decreasing && flat, "step: |u_2k - u_k| = " + diffs + "; linear: max difference " + num(worst, 3) +
                                    " within 3 combined stderr"};
}

Verdict ac8() {
    ProblemSpec s = unit_disk();
    s.g = parse("exp(-((x1 - 1)^2 + x2^2))", 2);
    const std::vector<double> z{1.0, 0.0};
    const BoundaryProbeReport r =
        boundary_continuity_probe(s, paths(4000, 1e-4, 108), z, {0.4, 0.2, 0.1, 0.05, 0.025}, 2);
    std::string gaps;
    for (const auto& row : r.rows) gaps += (gaps.empty() ? "" : ", ") + num(row.gap, 3);
    return {r.claim, "gaps " + gaps + "; trend t = " + num(r.trend_t, 3) + " (one-sided 95%)"};
}

Verdict ac9() {
    ProblemSpec s = interval();
    s.f = Expression::constant(1.0, 1);
    reference::Fd1dProblem pb;
    pb.f = s.f;
    const double h = 1.0 / 512.0;
    const auto sol = reference::solve_fd1d(pb, h);
    const auto good = GridFunction::sample(s.D, s.g, h, [&](std::span<const double> x) { return sol(x[0]); });
    const auto bad = GridFunction::sample(s.D, s.g, h, [&](std::span<const double> x) { return sol(x[0]) + 0.1 * x[0] * x[0]; });
    const SuiteReport rg = residual_suite(good, s, 5);
    const SuiteReport rb = residual_suite(bad, s, 5);
    double good_worst = 0.0, bad_least = INFINITY;
    for (const auto& r : rg.reports) good_worst = std::max(good_worst, std::abs(r.total) / r.budget);
    for (const auto& r : rb.reports) bad_least = std::min(bad_least, std::abs(r.total) / r.budget);
    return {rg.pass && rg.reports.size() == 5 && rb.reports.size() == 5 && bad_least >= 5.0,
            "oracle max |R|/budget " + num(good_worst, 3) + "; corrupted min |R|/budget " + num(bad_least, 4)};
}

Verdict ac10() {
    double worst = 0.0;
    for (double xi : {0.5, 1.0, 2.0})
        for (double alpha : {0.5, 1.0, 1.5}) {
            const auto phi = parse("cos(" + cli::fmt(xi) + " * x1)", 1);
            const double expect = -std::pow(xi, alpha);
            const auto r = frac_laplacian_pv(phi, std::vector<double>{0.0}, alpha);
            worst = std::max(worst, std::abs(r.value - expect) / std::abs(expect));
        }
    const double e1 = std::abs(frac_constant(1, 1.0) - 1.0 / std::numbers::pi);
    const double e2 = std::abs(frac_constant(2, 1.0) - 1.0 / (2.0 * std::numbers::pi));
    return {worst <= 0.01 && e1 <= 1e-12 && e2 <= 1e-12,
            "max relative symbol error " + num(worst, 3) + "; constant errors " + num(e1, 2) + ", " + num(e2, 2)};
}

Verdict ac11() {
    KernelBoundSetup s1;
    s1.mu = parse("1", 1);
    s1.x = {0.0};
    s1.t_grid = {1.0};
    const auto r1 = check_kernel_bounds(1.0, ExponentBundle::make(1, 1.0, 2.0), s1);
    bool ok = false;
    double explicit_ratio = NAN;
    for (const auto& t : r1.tables)
        if (t.explicit_constant) {
            explicit_ratio = t.rows[0].ratio;
            ok = explicit_ratio <= 1.0;
        }
    KernelBoundSetup s2;
    s2.mu = parse("1", 2);
    s2.x = {0.0, 0.0};
    s2.t_grid = {1.0, 0.25, 0.0625, 0.015625};
    const auto r2 = check_kernel_bounds(1.0, ExponentBundle::make(2, 1.0, 2.0), s2);
    std::string seqs;
    for (const auto& t : r2.tables) {
        seqs += " " + t.name + ":";
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            const double q = t.rows[i].ratio;
            seqs += " " + num(q, 3);
            ok = ok && std::isfinite(q);
            if (i) ok = ok && q <= t.rows[i - 1].ratio * (1.0 + 1e-9);
        }
    }
    ok = ok && r2.tables.size() == 2;
    return {ok, "d=1 explicit ratio " + num(explicit_ratio, 4) + ";" + seqs};
}

Verdict ac12() {
    ProblemSpec s = unit_disk();
    SolveConfig c = paths(10000, 1e-3, 112);
    c.k_ladder = {2};
    c.probe_points = {{0.0, 0.0}};
    const MomentDiagnostics m = diagnose_moments(s, c, {0.1, 0.25, 0.5});
    const ProbeMoments& p = m.probes[0];
    bool ok = p.exp_moment_8h.estimate.mean == 1.0 && p.exp_moment_8h.estimate.std_error == 0.0;
    std::string chain;
    double prev = 1.0;
    for (std::size_t i = 0; i < p.nu_grid.size(); ++i) {
        const auto& me = p.exp_moment_nu_tau[i];
        chain += (i ? ", " : "") + num(me.estimate.mean, 5);
        ok = ok && std::isfinite(me.estimate.mean) && me.estimate.mean > prev && me.stable;
        prev = me.estimate.mean;
    }
    return {ok, "exp_moment_8h = " + num(p.exp_moment_8h.estimate.mean, 17) + "; E0[exp(nu tau)] for nu 0.1, 0.25, 0.5: " +
                    chain + " (all stable)"};
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

Verdict ac13() {
    const fs::path root = fs::temp_directory_path() / "cvp_acceptance_ac13";
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path cfg = root / "run.yaml";
    std::ofstream(cfg) << R"yaml(seed: 13
problem:
  domain: {ball: {center: [0, 0], radius: 1}}
  c: "-0.5 * (x1^2 + x2^2)"
  f: "1"
  g: "exp(-((x1 - 1)^2 + x2^2))"
solve:
  k_ladder: [1, 2]
  n_paths: 400
  probe_points: [[0, 0], [0.3, 0.3]]
validate_samplers:
  samples: 2000
boundary_probe:
  z: [1, 0]
  radii: [0.4, 0.2, 0.1]
)yaml";
    // Monte Carlo candidate for the weak-form check, on a lattice fine enough for its bumps.
    const fs::path line = root / "line.yaml";
    std::ofstream(line) << R"yaml(seed: 13
problem:
  domain: {box: {lo: [-1], hi: [1]}}
  f: "1"
solve:
  n_paths: 50
weakform_check:
  source: solver
  hx: 0.03125
  n_bumps: 2
  k: 1
)yaml";
    std::size_t files = 0, differing = 0;
    std::string subs;
    for (const auto& sub : cli::subcommands()) {
        std::ostringstream out, err;
        const fs::path a = root / (sub + "_a"), b = root / (sub + "_b");
        const std::string c = sub == "weakform-check" ? line.string() : cfg.string();
        const int sa = cli::run({sub, "--config", c, "--out", a.string(), "--quiet"}, out, err);
        const int sb = cli::run({sub, "--config", c, "--out", b.string(), "--quiet"}, out, err);
        if (sa >= 2 || sb >= 2 || sa != sb) return {false, sub + " exited " + std::to_string(sa) + "/" + std::to_string(sb) + ": " + err.str()};
        for (const auto& e : fs::directory_iterator(a)) {
            const auto name = e.path().filename().string();
            if (name.size() > 10 && name.ends_with(".meta.json")) continue;
            ++files;
            if (slurp(e.path()) != slurp(b / name)) ++differing;
        }
        subs += (subs.empty() ? "" : ", ") + sub;
    }
    fs::remove_all(root);
    return {differing == 0 && files > 0, std::to_string(files) + " result files identical across reruns (" + subs + ")"};
}

}  // namespace

// Optional arguments name the criteria to run (default: all).
int main(int argc, char** argv) {
    const std::vector<std::string> only(argv + 1, argv + argc);
    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
        {"AC1", ac1}, {"AC2", ac2}, {"AC3", ac3}, {"AC4", ac4}, {"AC5", ac5}, {"AC6", ac6}, {"AC7", ac7},
        {"AC8", ac8}, {"AC9", ac9}, {"AC10", ac10}, {"AC11", ac11}, {"AC12", ac12}, {"AC13", ac13},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
        Verdict v;
        try {
            v = check();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        std::printf("%s %s %s\n", name, v.pass ? "PASS" : "FAIL", v.detail.c_str());
        std::fflush(stdout);
        failed += v.pass ? 0 : 1;
    }
    return failed ? 1 : 0;
}
