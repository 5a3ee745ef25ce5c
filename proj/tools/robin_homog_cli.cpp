// robin-homog: command line front end for the homogenization pipeline.

#include "robin_homog/bsde.hpp"
#include "robin_homog/families.hpp"
#include "robin_homog/harness.hpp"
#include "robin_homog/reference_solver.hpp"
#include "robin_homog/reflected_sde.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace rh = robin_homog;

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> sets;
    std::optional<std::string> family;
    std::optional<std::string> robin;
    std::optional<std::string> domain;
    std::optional<std::string> driver;
    std::optional<std::string> terminal;
    std::optional<std::string> x0;
    std::optional<std::string> epsilon;
    std::optional<double> dt;
    std::optional<double> horizon;
    std::optional<std::size_t> paths;
    std::optional<std::uint64_t> seed;
    std::optional<int> slabs;
    std::optional<std::string> basis;
    std::optional<std::string> scheme;
    std::optional<int> threads;
    std::optional<int> grid_n;
    std::optional<std::string> p_list;
    std::optional<std::string> output_dir;
    std::optional<std::string> psi;
    std::optional<std::string> kind;
};

void add_config_options(CLI::App* app, Common& c) {
    app->add_option("--config", c.config_path, "Flat key = value experiment file");
    app->add_option("--set", c.sets, "Override any config key, as key=value (repeatable)");
}

rh::ExperimentConfig build_config(const Common& c) {
    rh::ExperimentConfig cfg = c.config_path.empty() ? rh::ExperimentConfig{} : rh::load_config(c.config_path);
    auto put = [&cfg](const char* key, const auto& opt) {
        if (!opt) return;
        std::ostringstream s;
        s.precision(17);
        s << *opt;
        cfg.set(key, s.str());
    };
    put("family", c.family);
    put("robin", c.robin);
    put("domain", c.domain);
    put("driver", c.driver);
    put("terminal", c.terminal);
    put("x0", c.x0);
    put("epsilons", c.epsilon);
    put("T", c.horizon);
    put("paths", c.paths);
    put("seed", c.seed);
    put("slabs", c.slabs);
    put("basis", c.basis);
    put("scheme", c.scheme);
    put("threads", c.threads);
    put("grid_n", c.grid_n);
    put("p_list", c.p_list);
    put("output_dir", c.output_dir);
    put("psi", c.psi);
    put("diagnostic_kind", c.kind);
    for (const auto& kv : c.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw rh::PreconditionError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

void log_line(const std::string& msg) { std::cerr << "[robin-homog] " << msg << std::endl; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

rh::SimConfig sim_config_from(const rh::ExperimentConfig& cfg, std::optional<double> dt, bool events) {
    rh::SimConfig sc;
    sc.epsilon = cfg.epsilons.front();
    const double dt_target = dt ? *dt : cfg.dt_for(sc.epsilon);
    const std::size_t steps = rh::aligned_steps(cfg.T, dt_target, cfg.slabs);
    sc.T = cfg.T;
    sc.dt = cfg.T / static_cast<double>(steps);
    sc.record_stride = static_cast<int>(steps / static_cast<std::size_t>(cfg.slabs));
    sc.n_paths = cfg.paths_for(sc.epsilon);
    sc.x0 = cfg.x0.size() == 0 ? rh::Vec::Zero(cfg.dim) : cfg.x0;
    sc.seed = cfg.seed;
    sc.dk_max = cfg.dk_max;
    sc.scheme = cfg.scheme;
    sc.threads = cfg.threads;
    sc.record_events = events;
    return sc;
}

rh::ReflectedPathEnsemble simulate_from(const rh::ExperimentConfig& cfg, std::optional<double> dt, bool events) {
    auto coeffs = rh::make_coefficients(cfg.family, cfg.dim);
    rh::set_robin(coeffs, cfg.robin);
    const auto domain = rh::make_domain(cfg.domain, cfg.dim);
    const auto sc = sim_config_from(cfg, dt, events);
    const auto t0 = std::chrono::steady_clock::now();
    auto ens = rh::simulate_paths(coeffs, domain, sc);
    std::ostringstream msg;
    msg << "simulated " << sc.n_paths << " paths x " << sc.steps() << " steps in " << seconds_since(t0) << " s";
    log_line(msg.str());
    return ens;
}

rh::RobinTerm parse_robin_term(const std::string& text) {
    if (text == "field" || text == "recorded") return rh::RobinTerm::recorded();
    if (text == "none") return rh::RobinTerm::none();
    const auto spec = rh::parse_family_spec(text);
    if ((spec.name == "const" || spec.name == "constant") && spec.args.size() == 1) {
        return rh::RobinTerm::constant(spec.args[0]);
    }
    throw rh::PreconditionError("--robin must be field, none or const(v), got '" + text + "'");
}

void write_to(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw rh::PreconditionError("cannot write " + path.string());
    out << content;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Periodic homogenization with Robin boundary conditions: cell problems, reflected diffusions, BSDEs"};
    app.require_subcommand(1);
    Common c;

    auto* cell = app.add_subcommand("cell", "Invariant measure, correctors and effective tensor");
    add_config_options(cell, c);
    cell->add_option("--family", c.family, "Coefficient family, e.g. layered(0.5)");
    cell->add_option("--robin", c.robin, "Robin family, e.g. oscillating(-1,0.5)");
    cell->add_option("--grid-n", c.grid_n, "Grid points per axis (power of two)");
    cell->add_option("--p-list", c.p_list, "Comma-separated exponents for the corrector gradient norms");

    std::optional<std::string> ensemble_path;
    bool record_events = false;
    auto* simulate = app.add_subcommand("simulate", "Simulate reflected paths at one epsilon");
    add_config_options(simulate, c);
    auto add_sim_flags = [&](CLI::App* sub) {
        sub->add_option("--family", c.family, "Coefficient family");
        sub->add_option("--domain", c.domain, "disk(R), ball(R), ellipse(a,b) or ellipsoid(a,b,c)");
        sub->add_option("--x0", c.x0, "Start point, comma separated");
        sub->add_option("--epsilon", c.epsilon, "Scale epsilon");
        sub->add_option("--dt", c.dt, "Time step (default dt_factor * epsilon^2)");
        sub->add_option("--horizon", c.horizon, "Horizon T");
        sub->add_option("--paths", c.paths, "Number of paths");
        sub->add_option("--seed", c.seed, "Master seed");
        sub->add_option("--slabs", c.slabs, "Recorded slabs");
        sub->add_option("--scheme", c.scheme, "bridge or projection");
        sub->add_option("--threads", c.threads, "Worker threads (0 = automatic)");
    };
    add_sim_flags(simulate);
    simulate->add_option("--robin", c.robin, "Robin family for the weighted local-time channel");
    simulate->add_option("--ensemble", ensemble_path, "Write the ensemble to this binary file");
    simulate->add_flag("--events", record_events, "Record individual boundary contacts");

    std::string robin_term = "field";
    auto* bsde = app.add_subcommand("bsde", "Backward regression on a stored or freshly simulated ensemble");
    add_config_options(bsde, c);
    add_sim_flags(bsde);
    bsde->add_option("--ensemble", ensemble_path, "Ensemble file written by simulate");
    bsde->add_option("--driver", c.driver, "Driver f, e.g. decay(1)");
    bsde->add_option("--terminal", c.terminal, "Terminal data g: one, constant(v), bowl");
    bsde->add_option("--robin", robin_term, "Robin term: field, none or const(v)");
    bsde->add_option("--c-field", c.robin, "Robin family used when simulating inline");
    bsde->add_option("--basis", c.basis, "deg=K, poly(K) or radial(k,w)");

    double sigma2 = 1.0;
    double c_bar = -1.0;
    double radius = 1.0;
    double ref_T = 0.5;
    int ref_dim = 2;
    int nr = 400;
    int nt = 800;
    std::string ref_driver = "zero";
    std::string ref_terminal = "one";
    auto* reference = app.add_subcommand("reference", "Radial Crank-Nicolson solution of the constant-coefficient problem");
    reference->add_option("--sigma2", sigma2, "Scalar diffusion a_bar = sigma2 I");
    reference->add_option("--c-bar", c_bar, "Effective Robin coefficient (<= 0)");
    reference->add_option("--radius", radius, "Ball radius");
    reference->add_option("--horizon", ref_T, "Horizon T");
    reference->add_option("--dim", ref_dim, "Dimension");
    reference->add_option("--nr", nr, "Radial intervals");
    reference->add_option("--nt", nt, "Time steps");
    reference->add_option("--driver", ref_driver, "Rotation-invariant driver f");
    reference->add_option("--terminal", ref_terminal, "Radial terminal data g");

    auto* converge = app.add_subcommand("converge", "Sweep epsilon and compare with the homogenized problem");
    add_config_options(converge, c);
    converge->add_option("--paths", c.paths, "Paths per epsilon");
    converge->add_option("--seed", c.seed, "Master seed");
    converge->add_option("--threads", c.threads, "Worker threads (0 = automatic)");
    converge->add_option("--output", c.output_dir, "Output directory");

    auto* diagnose = app.add_subcommand("diagnose", "Decay of oscillatory volume or boundary integrals over epsilon");
    add_config_options(diagnose, c);
    diagnose->add_option("--psi", c.psi, "Torus function: zero, one, sin(i), cos(i)");
    diagnose->add_option("--kind", c.kind, "volume or boundary");
    diagnose->add_option("--paths", c.paths, "Paths per epsilon");
    diagnose->add_option("--seed", c.seed, "Master seed");
    diagnose->add_option("--horizon", c.horizon, "Horizon T");
    diagnose->add_option("--threads", c.threads, "Worker threads (0 = automatic)");
    diagnose->add_option("--output", c.output_dir, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*cell) {
            const auto cfg = build_config(c);
            const auto t0 = std::chrono::steady_clock::now();
            const auto st = rh::run_cell_stage(cfg);
            rh::write_cell_report(std::cout, st.report);
            log_line("cell stage done in " + std::to_string(seconds_since(t0)) + " s");
        } else if (*simulate) {
            const auto cfg = build_config(c);
            cfg.validate();
            const auto ens = simulate_from(cfg, c.dt, record_events);
            if (ensemble_path) ens.save(*ensemble_path);
            const auto stats = rh::local_time_stats(ens);
            std::cout << "epsilon,dt,steps,paths,slabs,K_mean,K_variance,K_sq_mean,boundary_fraction,aborted\n"
                      << rh::format_number(ens.epsilon) << "," << rh::format_number(ens.dt) << "," << ens.steps << ","
                      << ens.n_paths << "," << ens.slabs() << "," << rh::format_number(stats.mean) << ","
                      << rh::format_number(stats.variance) << "," << rh::format_number(stats.second_moment) << ","
                      << rh::format_number(stats.boundary_fraction) << "," << ens.aborted_count() << "\n";
        } else if (*bsde) {
            const auto cfg = build_config(c);
            cfg.validate();
            const auto ens = ensemble_path ? rh::ReflectedPathEnsemble::load(*ensemble_path) : simulate_from(cfg, c.dt, false);
            const auto domain = rh::make_domain(cfg.domain, ens.dim);
            const auto driver = rh::make_driver(cfg.driver, cfg.terminal);
            rh::BsdeOptions opts;
            opts.threads = cfg.threads;
            const auto sol = rh::solve_bsde(ens, driver, parse_robin_term(robin_term),
                                            rh::RegressionBasis::parse(cfg.basis, domain), opts);
            double max_cond = 0.0;
            for (const auto& s : sol.slabs) max_cond = std::max(max_cond, s.condition);
            for (const auto& w : sol.warnings) log_line("warning: " + w);
            std::cout << "y0,stderr,max_abs_y,y_bound,paths_used,slabs,max_condition,warnings\n"
                      << rh::format_number(sol.y0) << "," << rh::format_number(sol.y0_stderr) << ","
                      << rh::format_number(sol.max_abs_y) << "," << rh::format_number(sol.y_bound) << ","
                      << sol.paths_used << "," << sol.slabs.size() << "," << rh::format_number(max_cond) << ","
                      << sol.warnings.size() << "\n";
        } else if (*reference) {
            rh::RadialProblem p;
            p.a_bar_scalar = sigma2;
            p.C_bar = c_bar;
            p.R = radius;
            p.T = ref_T;
            p.dim = ref_dim;
            p.nr = nr;
            p.nt = nt;
            const auto driver = rh::make_driver(ref_driver, ref_terminal);
            if (!driver.rotation_invariant) throw rh::PreconditionError("oracle inapplicable: driver is not rotation invariant");
            p.g_radial = [&driver, ref_dim](double r) {
                rh::Vec x = rh::Vec::Zero(ref_dim);
                x[0] = r;
                return driver.g(x);
            };
            p.f_bar_radial = [&driver, ref_dim](double r, double y, double zr) {
                rh::Vec x = rh::Vec::Zero(ref_dim);
                rh::Vec z = rh::Vec::Zero(ref_dim);
                x[0] = r;
                z[0] = zr;
                return driver.f(x, y, z);
            };
            const auto sol = rh::solve_radial(p);
            std::cout << "r,u\n";
            for (std::size_t j = 0; j < sol.r.size(); ++j) {
                std::cout << rh::format_number(sol.r[j]) << "," << rh::format_number(sol.u[j]) << "\n";
            }
        } else if (*converge) {
            const auto cfg = build_config(c);
            const auto t0 = std::chrono::steady_clock::now();
            const auto table = rh::convergence_sweep(cfg);
            std::ostringstream csv;
            std::ostringstream summary;
            rh::write_convergence_csv(csv, table);
            rh::write_convergence_summary(summary, table);
            const std::filesystem::path dir(cfg.output_dir);
            write_to(dir / "convergence.csv", csv.str());
            write_to(dir / "convergence_summary.csv", summary.str());
            write_to(dir / "config.txt", cfg.to_text());
            std::cout << csv.str();
            log_line("convergence sweep done in " + std::to_string(seconds_since(t0)) + " s");
        } else if (*diagnose) {
            const auto cfg = build_config(c);
            const auto kind = rh::parse_averaging_kind(cfg.diagnostic_kind);
            const auto table = rh::averaging_diagnostic(cfg, rh::make_torus_function(cfg.psi, cfg.dim), kind);
            std::ostringstream csv;
            std::ostringstream summary;
            rh::write_averaging_csv(csv, table);
            rh::write_averaging_summary(summary, table);
            const std::filesystem::path dir(cfg.output_dir);
            const std::string stem = std::string("averaging_") + (kind == rh::AveragingKind::Volume ? "volume" : "boundary");
            write_to(dir / (stem + ".csv"), csv.str());
            write_to(dir / (stem + "_summary.csv"), summary.str());
            std::cout << csv.str();
        }
    } catch (const rh::PreconditionError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const rh::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << std::endl;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
