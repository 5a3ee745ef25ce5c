// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.

#include "robin_homog/boundary_measure.hpp"
#include "robin_homog/bsde.hpp"
#include "robin_homog/cell_solver.hpp"
#include "robin_homog/families.hpp"
#include "robin_homog/harness.hpp"
#include "robin_homog/reference_solver.hpp"
#include "robin_homog/reflected_sde.hpp"
#include "stats.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace robin_homog;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kFloatingFloor = 1e-12;

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) pass = false;
        detail << (detail.tellp() > 0 ? "; " : "") << what << (ok ? "" : " [failed]");
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) { return format_number(v); }

/// Midpoint-rule mean of a one-dimensional periodic function.
double periodic_mean(const std::function<double(double)>& f, int n = 1 << 16) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += f((i + 0.5) / n);
    return s / n;
}

double layered_alpha(double x) { return 1.0 / (1.0 + 0.5 * std::sin(2 * kPi * x)); }

Vec origin(int d = 2) { return Vec::Zero(d); }

Outcome criterion_1() {
    Outcome o;
    const auto start = Clock::now();
    const CellProblem problem(layered_family(2, 0.5), 256);
    const auto m = solve_invariant_measure(problem);
    const auto correctors = solve_correctors(problem, m);
    const Mat a_bar = effective_diffusion(problem, correctors, m);
    const double elapsed = seconds_since(start);
    Mat expected(2, 2);
    expected << 1.0 / periodic_mean([](double x) { return 1.0 / layered_alpha(x); }), 0.0, 0.0, 1.0;
    const double err = (a_bar - expected).cwiseAbs().maxCoeff();
    o.require(err < 1e-5, "max |a_bar - diag(harmonic, arithmetic)| = " + fmt(err) + " < 1e-5");
    o.require(elapsed < 10.0, "runtime " + fmt(elapsed) + " s < 10 s");
    return o;
}

Outcome criterion_2() {
    Outcome o;
    const auto start = Clock::now();
    const CellProblem problem(admissible_family(2, 0.5), 256);
    const auto m = solve_invariant_measure(problem);
    const double elapsed = seconds_since(start);
    const double target_mean = periodic_mean([](double x) { return 1.0 + 0.5 * std::sin(2 * kPi * x); });
    double err = 0.0;
    for (std::size_t j = 0; j < problem.grid().size(); ++j) {
        const double x1 = problem.grid().point(j)[0];
        const double target = (1.0 + 0.5 * std::sin(2 * kPi * x1)) / target_mean;
        err = std::max(err, std::abs(m.values[static_cast<Eigen::Index>(j)] - target));
    }
    const double centering = centering_residual(problem, m).norm();
    o.require(err < 1e-6, "||m - m_target||_inf = " + fmt(err) + " < 1e-6");
    o.require(centering < 1e-8, "centering residual " + fmt(centering) + " < 1e-8");
    o.require(elapsed < 10.0, "runtime " + fmt(elapsed) + " s < 10 s");
    return o;
}

Outcome criterion_3() {
    Outcome o;
    const double expected = periodic_mean([](double x) {
        const double g = 1.0 / layered_alpha(x);
        return g * g;
    });
    std::vector<std::vector<double>> table;
    for (int n : {128, 256}) {
        const CellProblem problem(layered_family(2, 0.5), n);
        const auto m = solve_invariant_measure(problem);
        const auto correctors = solve_correctors(problem, m);
        std::vector<double> row;
        for (double p : {2.0, 4.0}) {
            for (double v : corrector_gradient_lp(correctors, p)) {
                if (!std::isfinite(v)) o.require(false, "non-finite L^p entry");
            }
            row.push_back(corrector_gradient_lp(correctors, p)[0]);
        }
        table.push_back(row);
    }
    const double l2sq = table[1][0] * table[1][0];
    o.require(std::abs(l2sq - expected) < 1e-6, "||e1 + grad w1||_2^2 = " + fmt(l2sq) + ", expected " + fmt(expected));
    for (std::size_t k = 0; k < 2; ++k) {
        const double diff = std::abs(table[0][k] - table[1][k]);
        o.require(diff < 1e-4, "p = " + std::string(k == 0 ? "2" : "4") + ": |n128 - n256| = " + fmt(diff));
    }
    return o;
}

Outcome criterion_4() {
    Outcome o;
    const auto start = Clock::now();
    const auto coeffs = identity_family(2);
    const auto disk = ConvexDomain::ball(2, 1.0);
    std::uint64_t negative = 0;
    auto count_negative = [&](const ReflectedPathEnsemble& e) {
        for (double dk : e.dK) negative += dk < 0.0 ? 1 : 0;
    };

    {
        SimConfig cfg;
        cfg.T = 0.05;
        cfg.dt = 1e-3;
        cfg.n_paths = 100000;
        cfg.x0 = origin();
        cfg.seed = 401;
        cfg.record_stride = static_cast<int>(cfg.steps());
        const auto ens = simulate_paths(coeffs, disk, cfg);
        count_negative(ens);
        std::vector<double> r2;
        for (std::uint64_t p = 0; p < ens.n_paths; ++p) r2.push_back((ens.state(p, ens.slabs()) - cfg.x0).squaredNorm());
        const auto e = test_support::mean_estimate(r2);
        o.require(std::abs(e.mean - 2 * cfg.T) <= 3 * e.stderr_of_mean,
                  "(a) E|X_T - x0|^2 = " + fmt(e.mean) + " +- " + fmt(e.stderr_of_mean) + " vs " + fmt(2 * cfg.T));
    }
    {
        SimConfig cfg;
        cfg.T = 4.0;
        cfg.dt = 1e-3;
        cfg.n_paths = 8192;
        cfg.x0 = origin();
        cfg.seed = 402;
        cfg.record_stride = static_cast<int>(cfg.steps());
        const auto ens = simulate_paths(coeffs, disk, cfg);
        count_negative(ens);
        // 8 equal-area rings times 8 sectors.
        std::vector<double> counts(64, 0.0);
        for (std::uint64_t p = 0; p < ens.n_paths; ++p) {
            const Vec x = ens.state(p, ens.slabs());
            const int ring = std::min(7, static_cast<int>(8.0 * x.squaredNorm()));
            const double angle = std::atan2(x[1], x[0]) + kPi;
            const int sector = std::min(7, static_cast<int>(angle / (2 * kPi) * 8.0));
            counts[static_cast<std::size_t>(ring * 8 + sector)] += 1.0;
        }
        const double expected = static_cast<double>(ens.n_paths) / 64.0;
        double chi2 = 0.0;
        for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
        const double critical = test_support::chi_squared_upper(63, 0.01);
        o.require(chi2 < critical, "(b) chi^2 = " + fmt(chi2) + " < " + fmt(critical));
    }
    {
        auto layered = layered_family(2, 0.5);
        SimConfig cfg;
        cfg.epsilon = 0.5;
        cfg.T = 0.25;
        cfg.dt = 0.005 * 0.25;
        cfg.n_paths = 1000;
        cfg.x0 = origin();
        cfg.x0[0] = 0.95;
        cfg.seed = 403;
        cfg.record_stride = 1;
        const auto ens = simulate_paths(layered, disk, cfg);
        count_negative(ens);
        std::uint64_t positive = 0;
        std::uint64_t outside_band = 0;
        for (std::uint64_t p = 0; p < ens.n_paths; ++p) {
            if (ens.aborted[p]) continue;
            for (std::uint64_t k = 0; k < ens.slabs(); ++k) {
                if (!(ens.local_time_increment(p, k) > 0.0)) continue;
                ++positive;
                const Vec pre = ens.state(p, k);
                const Vec post = ens.state(p, k + 1);
                const double band = bridge_band_width(layered, pre, cfg.dt, cfg.epsilon);
                const double near = std::min(disk.signed_distance(pre), disk.signed_distance(post));
                if (near > band) ++outside_band;
            }
        }
        o.require(positive > 0 && outside_band == 0,
                  "(c) " + std::to_string(positive) + " steps with dK > 0, " + std::to_string(outside_band) +
                      " outside the boundary band");
    }
    o.require(negative == 0, std::to_string(negative) + " negative dK increments");
    const double elapsed = seconds_since(start);
    o.require(elapsed < 120.0, "runtime " + fmt(elapsed) + " s < 120 s");
    return o;
}

Outcome criterion_5() {
    Outcome o;
    auto coeffs = identity_family(2);
    set_robin(coeffs, "constant(-1)");
    const auto disk = ConvexDomain::ball(2, 1.0);
    const auto basis = RegressionBasis::parse("deg=4", disk);

    auto run = [&](const std::string& driver, const RobinTerm& robin, std::uint64_t seed, double* fk,
                   double* fk_se) {
        const auto start = Clock::now();
        SimConfig cfg;
        cfg.epsilon = 1.0;
        cfg.T = 0.5;
        cfg.dt = 1e-3;
        cfg.n_paths = 20000;
        cfg.x0 = origin();
        cfg.seed = seed;
        cfg.record_stride = 5;
        const auto ens = simulate_paths(coeffs, disk, cfg);
        if (fk) {
            std::vector<double> w;
            for (std::uint64_t p = 0; p < ens.n_paths; ++p) {
                if (!ens.aborted[p]) w.push_back(std::exp(-ens.local_time(p)));
            }
            const auto e = test_support::mean_estimate(w);
            *fk = e.mean;
            *fk_se = e.stderr_of_mean;
        }
        auto sol = solve_bsde(ens, make_driver(driver, "one"), robin, basis);
        return std::make_pair(sol, seconds_since(start));
    };

    const auto [trivial, t1] = run("zero", RobinTerm::none(), 501, nullptr, nullptr);
    o.require(std::abs(trivial.y0 - 1.0) <= kFloatingFloor, "f = 0: y0 - 1 = " + fmt(trivial.y0 - 1.0));
    const auto [decay, t2] = run("decay(1)", RobinTerm::none(), 502, nullptr, nullptr);
    const double target = std::exp(-0.5);
    o.require(std::abs(decay.y0 - target) <= 3 * decay.y0_stderr + kFloatingFloor,
              "f = -y: y0 - exp(-0.5) = " + fmt(decay.y0 - target) + " (stderr " + fmt(decay.y0_stderr) + ")");
    double fk = 0.0;
    double fk_se = 0.0;
    const auto [robin, t3] = run("zero", RobinTerm::constant(-1.0), 503, &fk, &fk_se);
    o.require(std::abs(robin.y0 - fk) <= 3 * robin.y0_stderr + kFloatingFloor,
              "c = -1: y0 = " + fmt(robin.y0) + " +- " + fmt(robin.y0_stderr) + " vs mean exp(-K_T) = " + fmt(fk));
    const double worst = std::max({t1, t2, t3});
    o.require(worst < 120.0, "slowest case " + fmt(worst) + " s < 120 s");
    return o;
}

Outcome criterion_6() {
    Outcome o;
    const auto start = Clock::now();
    RadialProblem problem;
    problem.a_bar_scalar = 1.0;
    problem.C_bar = -1.0;
    problem.R = 1.0;
    problem.T = 0.5;
    problem.dim = 2;
    problem.g_radial = [](double) { return 1.0; };
    problem.nr = 400;
    problem.nt = 800;
    const double oracle = solve_radial(problem).u_center;

    auto coeffs = identity_family(2);
    set_robin(coeffs, "constant(-1)");
    const auto disk = ConvexDomain::ball(2, 1.0);
    SimConfig cfg;
    cfg.T = 0.5;
    cfg.dt = 5e-4;
    cfg.n_paths = 40000;
    cfg.x0 = origin();
    cfg.seed = 601;
    cfg.record_stride = 10;
    const auto ens = simulate_paths(coeffs, disk, cfg);
    const auto sol = solve_bsde(ens, make_driver("zero", "one"), RobinTerm::constant(-1.0),
                                RegressionBasis::parse("deg=4", disk));
    const double elapsed = seconds_since(start);
    const double tol = 3 * sol.y0_stderr + 1e-3;
    o.require(std::abs(sol.y0 - oracle) <= tol, "y0 = " + fmt(sol.y0) + " +- " + fmt(sol.y0_stderr) +
                                                    " vs radial u(0,0) = " + fmt(oracle) + ", tolerance " + fmt(tol));
    o.require(elapsed < 180.0, "runtime " + fmt(elapsed) + " s < 180 s");
    return o;
}

Outcome criterion_7() {
    Outcome o;
    const auto start = Clock::now();
    ExperimentConfig cfg;
    cfg.family = "identity";
    cfg.robin = "zero";
    cfg.T = 1.0;
    cfg.epsilons = {0.5, 0.25, 0.125};
    cfg.paths = 4000;
    cfg.seed = 7;
    cfg.grid_n = 32;
    const auto psi = make_torus_function("sin(1)", 2);
    const auto volume = averaging_diagnostic(cfg, psi, AveragingKind::Volume);
    const auto& coarse = volume.rows.front();
    const auto& fine = volume.rows.back();
    const double ratio = fine.second_moment / coarse.second_moment;
    o.require(coarse.epsilon == 0.5 && fine.epsilon == 0.125 && ratio < 0.1,
              "volume: E[I^2] = " + fmt(coarse.second_moment) + " +- " + fmt(coarse.second_moment_stderr) +
                  " at eps 0.5, " + fmt(fine.second_moment) + " +- " + fmt(fine.second_moment_stderr) +
                  " at eps 0.125, ratio " + fmt(ratio) + " < 0.1");
    const double volume_time = seconds_since(start);
    o.require(volume_time < 300.0, "volume runtime " + fmt(volume_time) + " s < 300 s");

    try {
        const auto boundary = averaging_diagnostic(cfg, psi, AveragingKind::Boundary);
        const auto& row = boundary.rows.back();
        o.require(row.epsilon == 0.125 && std::abs(row.mean) <= 3 * row.mean_stderr,
                  "boundary: local-time average " + fmt(row.mean) + " +- " + fmt(row.mean_stderr) + " at eps 0.125");
    } catch (const PreconditionError& e) {
        o.require(false, std::string("boundary: ") + e.what());
    }
    return o;
}

struct SweepFiles {
    std::string csv;
    std::string summary;
    ConvergenceTable table;
    double seconds = 0.0;
};

ExperimentConfig convergence_config(int threads) {
    ExperimentConfig cfg;
    cfg.family = "layered(0.5)";
    cfg.robin = "oscillating(-1,0.5)";
    cfg.driver = "decay-gradient(1,0.1)";
    cfg.terminal = "bowl";
    cfg.domain = "disk(1)";
    cfg.T = 0.5;
    cfg.epsilons = {0.5, 0.25, 0.125};
    cfg.threads = threads;
    return cfg;
}

SweepFiles run_sweep(int threads) {
    const auto start = Clock::now();
    const auto cfg = convergence_config(threads);
    SweepFiles out;
    out.table = convergence_sweep(cfg);
    out.seconds = seconds_since(start);
    const auto dir = std::filesystem::temp_directory_path() / ("robin_homog_acceptance_t" + std::to_string(threads));
    std::filesystem::create_directories(dir);
    {
        std::ofstream f(dir / "convergence.csv", std::ios::binary);
        write_convergence_csv(f, out.table);
    }
    {
        std::ofstream f(dir / "convergence_summary.csv", std::ios::binary);
        write_convergence_summary(f, out.table);
    }
    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream f(p, std::ios::binary);
        std::ostringstream s;
        s << f.rdbuf();
        return s.str();
    };
    out.csv = slurp(dir / "convergence.csv");
    out.summary = slurp(dir / "convergence_summary.csv");
    return out;
}

std::optional<SweepFiles> sweep_four;

const SweepFiles& sweep_with_four_threads() {
    if (!sweep_four) sweep_four = run_sweep(4);
    return *sweep_four;
}

Outcome criterion_8() {
    Outcome o;
    const auto& run = sweep_with_four_threads();
    const ConvergenceRow* first = nullptr;
    const ConvergenceRow* last = nullptr;
    for (const auto& row : run.table.rows) {
        if (row.route != "epsilon") continue;
        if (!first) first = &row;
        last = &row;
    }
    if (!first || !last || first == last) {
        o.require(false, "sweep produced fewer than two epsilon rows");
        return o;
    }
    o.require(std::abs(last->gap) < std::abs(first->gap), "gap " + fmt(std::abs(last->gap)) + " at eps " +
                                                               fmt(last->epsilon) + " < gap " + fmt(std::abs(first->gap)) +
                                                               " at eps " + fmt(first->epsilon));
    const double tol = 3 * last->gap_stderr + 0.02;
    o.require(std::abs(last->gap) < tol, "final gap " + fmt(std::abs(last->gap)) + " < 3 * " + fmt(last->gap_stderr) +
                                             " + 0.02 (u0 = " + fmt(run.table.homogenized.y0) + ")");
    o.require(run.seconds < 1200.0, "runtime " + fmt(run.seconds) + " s < 1200 s");
    return o;
}

Outcome criterion_9() {
    Outcome o;
    const auto& four = sweep_with_four_threads();
    const auto one = run_sweep(1);
    o.require(one.csv == four.csv, "convergence.csv identical for threads 1 and 4");
    o.require(one.summary == four.summary, "convergence_summary.csv identical for threads 1 and 4");
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::function<Outcome()>> criteria{criterion_1, criterion_2, criterion_3,
                                                         criterion_4, criterion_5, criterion_6,
                                                         criterion_7, criterion_8, criterion_9};
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    int failures = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int id = static_cast<int>(k) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        const auto start = Clock::now();
        bool pass = false;
        std::string detail;
        try {
            const Outcome o = criteria[k]();
            pass = o.pass;
            detail = o.detail.str();
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        if (!pass) ++failures;
        std::printf("criterion %d: %s (%.1f s) %s\n", id, pass ? "PASS" : "FAIL", seconds_since(start), detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
