#include "robin_homog/harness.hpp"

#include "robin_homog/boundary_measure.hpp"
#include "robin_homog/families.hpp"
#include "robin_homog/reference_solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>

namespace robin_homog {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& text) {
    const auto t = trim(text);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != t.size()) throw PreconditionError("key '" + key + "': expected a number, got '" + text + "'");
    return v;
}

long long parse_integer(const std::string& key, const std::string& text) {
    const auto t = trim(text);
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(t, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != t.size()) throw PreconditionError("key '" + key + "': expected an integer, got '" + text + "'");
    return v;
}

std::size_t parse_count(const std::string& key, const std::string& text) {
    const auto v = parse_integer(key, text);
    if (v < 0) throw PreconditionError("key '" + key + "' must be nonnegative");
    return static_cast<std::size_t>(v);
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
    std::string t = trim(text);
    if (!t.empty() && (t.front() == '{' || t.front() == '[' || t.front() == '(')) t = t.substr(1);
    if (!t.empty() && (t.back() == '}' || t.back() == ']' || t.back() == ')')) t.pop_back();
    std::vector<double> out;
    std::stringstream ss(t);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (trim(item).empty()) continue;
        out.push_back(parse_double(key, item));
    }
    return out;
}

std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i > 0) s += ",";
        s += format_number(v[i]);
    }
    return s;
}

Vec start_point(const ExperimentConfig& cfg) { return cfg.x0.size() == 0 ? Vec::Zero(cfg.dim) : cfg.x0; }

const EpsilonOverride* find_override(const ExperimentConfig& cfg, double epsilon) {
    for (const auto& [eps, ov] : cfg.overrides) {
        if (std::abs(eps - epsilon) <= 1e-12 * std::max(1.0, std::abs(epsilon))) return &ov;
    }
    return nullptr;
}

double pooled_stderr(const Eigen::ArrayXd& v) {
    const auto n = static_cast<double>(v.size());
    if (v.size() < 2) return std::numeric_limits<double>::infinity();
    const double mean = v.mean();
    return std::sqrt((v - mean).square().sum() / (n - 1.0) / n);
}

SimConfig base_sim(const ExperimentConfig& cfg, double epsilon, double dt_target, int slabs, std::size_t paths,
                   std::uint64_t stream) {
    SimConfig sc;
    sc.epsilon = epsilon;
    const std::size_t steps = aligned_steps(cfg.T, dt_target, slabs);
    sc.T = cfg.T;
    sc.dt = cfg.T / static_cast<double>(steps);
    sc.record_stride = static_cast<int>(steps / static_cast<std::size_t>(slabs));
    sc.n_paths = paths;
    sc.x0 = start_point(cfg);
    sc.seed = derive_seed(cfg.seed, stream);
    sc.dk_max = cfg.dk_max;
    sc.scheme = cfg.scheme;
    sc.threads = cfg.threads;
    return sc;
}

}  // namespace

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> lx;
    std::vector<double> ly;
    for (std::size_t i = 0; i < std::min(x.size(), y.size()); ++i) {
        if (x[i] > 0.0 && y[i] > 0.0) {
            lx.push_back(std::log(x[i]));
            ly.push_back(std::log(y[i]));
        }
    }
    if (lx.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    const double n = static_cast<double>(lx.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxy += (lx[i] - mx) * (ly[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    return sxx > 0.0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
}

void ExperimentConfig::set(const std::string& raw_key, const std::string& value) {
    const std::string key = trim(raw_key);
    const std::string v = trim(value);
    if (key.rfind("override.", 0) == 0) {
        const std::string rest = key.substr(9);
        const auto dot = rest.rfind('.');
        if (dot == std::string::npos) throw PreconditionError("override key must be override.<epsilon>.<field>: " + key);
        const double eps = parse_double(key, rest.substr(0, dot));
        const std::string field = rest.substr(dot + 1);
        auto& ov = overrides[eps];
        if (field == "dt") {
            ov.dt = parse_double(key, v);
        } else if (field == "paths") {
            ov.paths = parse_count(key, v);
        } else if (field == "slabs") {
            ov.slabs = static_cast<int>(parse_integer(key, v));
        } else {
            throw PreconditionError("unknown override field '" + field + "' (dt, paths or slabs)");
        }
        return;
    }
    if (key == "dim") {
        dim = static_cast<int>(parse_integer(key, v));
    } else if (key == "family") {
        family = v;
    } else if (key == "robin") {
        robin = v;
    } else if (key == "domain") {
        domain = v;
    } else if (key == "driver") {
        driver = v;
    } else if (key == "terminal") {
        terminal = v;
    } else if (key == "x0") {
        const auto list = parse_list(key, v);
        x0 = Vec::Map(list.data(), static_cast<Eigen::Index>(list.size()));
    } else if (key == "T" || key == "horizon") {
        T = parse_double(key, v);
    } else if (key == "epsilons" || key == "epsilon") {
        epsilons = parse_list(key, v);
    } else if (key == "dt_factor") {
        dt_factor = parse_double(key, v);
    } else if (key == "paths") {
        paths = parse_count(key, v);
    } else if (key == "slabs") {
        slabs = static_cast<int>(parse_integer(key, v));
    } else if (key == "basis") {
        basis = v;
    } else if (key == "scheme") {
        scheme = parse_reflection_scheme(v);
    } else if (key == "output_dir") {
        output_dir = v;
    } else if (key == "seed") {
        seed = static_cast<std::uint64_t>(parse_count(key, v));
    } else if (key == "threads") {
        threads = static_cast<int>(parse_integer(key, v));
    } else if (key == "grid_n") {
        grid_n = static_cast<int>(parse_integer(key, v));
    } else if (key == "p_list") {
        p_list = parse_list(key, v);
    } else if (key == "homogenized_dt") {
        homogenized_dt = parse_double(key, v);
    } else if (key == "homogenized_paths") {
        homogenized_paths = parse_count(key, v);
    } else if (key == "cond_paths") {
        cond_paths = parse_count(key, v);
    } else if (key == "psi") {
        psi = v;
    } else if (key == "diagnostic_kind") {
        diagnostic_kind = v;
    } else if (key == "dk_max") {
        dk_max = parse_double(key, v);
    } else {
        throw PreconditionError("unknown config key '" + key + "'");
    }
}

void ExperimentConfig::validate() const {
    if (dim < 2 || dim > 3) throw PreconditionError("dim must be 2 or 3");
    if (epsilons.empty()) throw PreconditionError("epsilon list is empty");
    for (std::size_t i = 0; i < epsilons.size(); ++i) {
        if (!(epsilons[i] > 0.0)) throw PreconditionError("every epsilon must be positive");
        if (i > 0 && !(epsilons[i] < epsilons[i - 1])) throw PreconditionError("epsilon list must be strictly decreasing");
    }
    if (!(T > 0.0)) throw PreconditionError("T must be positive");
    if (!(dt_factor > 0.0)) throw PreconditionError("dt_factor must be positive");
    if (paths < 2) throw PreconditionError("paths must be at least 2");
    if (slabs < 1) throw PreconditionError("slabs must be at least 1");
    if (!(homogenized_dt > 0.0)) throw PreconditionError("homogenized_dt must be positive");
    for (const auto& [eps, ov] : overrides) {
        if (ov.slabs && *ov.slabs < 1) throw PreconditionError("override slabs must be at least 1");
        if (ov.dt && !(*ov.dt > 0.0)) throw PreconditionError("override dt must be positive");
        if (ov.paths && *ov.paths < 2) throw PreconditionError("override paths must be at least 2");
    }
    parse_averaging_kind(diagnostic_kind);
    const auto dom = make_domain(domain, dim);
    const Vec x = start_point(*this);
    if (x.size() != dim) throw PreconditionError("x0 has the wrong dimension");
    if (!dom.contains(x)) throw PreconditionError("x0 lies outside the closed domain");
}

std::string ExperimentConfig::to_text() const {
    std::ostringstream out;
    out << "dim = " << dim << "\n"
        << "family = " << family << "\n"
        << "robin = " << robin << "\n"
        << "domain = " << domain << "\n"
        << "driver = " << driver << "\n"
        << "terminal = " << terminal << "\n";
    const Vec x = start_point(*this);
    out << "x0 = " << join(std::vector<double>(x.data(), x.data() + x.size())) << "\n"
        << "T = " << format_number(T) << "\n"
        << "epsilons = " << join(epsilons) << "\n"
        << "dt_factor = " << format_number(dt_factor) << "\n"
        << "paths = " << paths << "\n"
        << "slabs = " << slabs << "\n"
        << "basis = " << basis << "\n"
        << "scheme = " << to_string(scheme) << "\n"
        << "output_dir = " << output_dir << "\n"
        << "seed = " << seed << "\n"
        << "threads = " << threads << "\n"
        << "grid_n = " << grid_n << "\n"
        << "p_list = " << join(p_list) << "\n"
        << "homogenized_dt = " << format_number(homogenized_dt) << "\n"
        << "homogenized_paths = " << homogenized_paths << "\n"
        << "cond_paths = " << cond_paths << "\n"
        << "psi = " << psi << "\n"
        << "diagnostic_kind = " << diagnostic_kind << "\n"
        << "dk_max = " << format_number(dk_max) << "\n";
    for (const auto& [eps, ov] : overrides) {
        const std::string prefix = "override." + format_number(eps) + ".";
        if (ov.dt) out << prefix << "dt = " << format_number(*ov.dt) << "\n";
        if (ov.paths) out << prefix << "paths = " << *ov.paths << "\n";
        if (ov.slabs) out << prefix << "slabs = " << *ov.slabs << "\n";
    }
    return out.str();
}

double ExperimentConfig::dt_for(double epsilon) const {
    const auto* ov = find_override(*this, epsilon);
    if (ov && ov->dt) return *ov->dt;
    return dt_factor * epsilon * epsilon;
}

std::size_t ExperimentConfig::paths_for(double epsilon) const {
    const auto* ov = find_override(*this, epsilon);
    if (ov && ov->paths) return *ov->paths;
    return paths;
}

int ExperimentConfig::slabs_for(double epsilon) const {
    const auto* ov = find_override(*this, epsilon);
    if (ov && ov->slabs) return *ov->slabs;
    return slabs;
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw PreconditionError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        cfg.set(line.substr(0, eq), line.substr(eq + 1));
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw PreconditionError("cannot open config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

ConvexDomain make_domain(const std::string& spec_text, int dim) {
    const auto spec = parse_family_spec(spec_text);
    if (spec.name == "disk" || spec.name == "ball") {
        if (spec.name == "disk" && dim != 2) throw PreconditionError("disk is two-dimensional; use ball(R)");
        if (spec.args.size() > 1) throw PreconditionError("disk/ball take one radius");
        return ConvexDomain::ball(dim, spec.args.empty() ? 1.0 : spec.args[0]);
    }
    if (spec.name == "ellipse" || spec.name == "ellipsoid") {
        if (static_cast<int>(spec.args.size()) != dim) throw PreconditionError("ellipse/ellipsoid need one semi-axis per dimension");
        return ConvexDomain::ellipsoid(Vec::Map(spec.args.data(), dim));
    }
    throw PreconditionError("unknown domain '" + spec_text + "' (disk, ball, ellipse or ellipsoid)");
}

TorusScalarFn make_torus_function(const std::string& text, int dim) {
    const auto spec = parse_family_spec(text);
    if (spec.name == "zero" && spec.args.empty()) return [](const Vec&) { return 0.0; };
    if (spec.name == "one" && spec.args.empty()) return [](const Vec&) { return 1.0; };
    if ((spec.name == "sin" || spec.name == "cos") && spec.args.size() == 1) {
        const int axis = static_cast<int>(spec.args[0]) - 1;
        if (axis < 0 || axis >= dim || spec.args[0] != axis + 1) throw PreconditionError("torus function axis out of range: " + text);
        if (spec.name == "sin") return [axis](const Vec& y) { return std::sin(2.0 * std::numbers::pi * y[axis]); };
        return [axis](const Vec& y) { return std::cos(2.0 * std::numbers::pi * y[axis]); };
    }
    throw PreconditionError("unknown torus function '" + text + "' (zero, one, sin(i), cos(i))");
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::size_t aligned_steps(double T, double dt_target, int slabs) {
    if (!(T > 0.0) || !(dt_target > 0.0) || slabs < 1) throw PreconditionError("aligned_steps needs positive T, dt, slabs");
    const double per_slab = T / (dt_target * slabs);
    const auto k = static_cast<std::size_t>(std::max(1.0, std::ceil(per_slab - 1e-9)));
    return k * static_cast<std::size_t>(slabs);
}

CellStage run_cell_stage(const ExperimentConfig& cfg) {
    CellStage st;
    st.coeffs = make_coefficients(cfg.family, cfg.dim);
    set_robin(st.coeffs, cfg.robin);
    st.problem = std::make_unique<CellProblem>(st.coeffs, cfg.grid_n);
    MeasureSolveInfo info;
    st.m = solve_invariant_measure(*st.problem, &info);
    auto& rep = st.report;
    rep.grid_n = cfg.grid_n;
    rep.m_min = st.m.min();
    rep.m_max = st.m.max();
    rep.m_mean = st.m.mean();
    rep.measure_iterations = info.iterations;
    rep.measure_residual = info.residual;
    rep.centering = centering_residual(*st.problem, st.m);
    st.correctors = solve_correctors(*st.problem, st.m);
    rep.corrector_residuals = st.correctors.final_residuals;
    rep.a_bar = effective_diffusion(*st.problem, st.correctors, st.m);
    rep.bounds = voigt_reuss_bounds(*st.problem, st.m);
    rep.p_list = cfg.p_list;
    for (double p : cfg.p_list) rep.lp.push_back(corrector_gradient_lp(st.correctors, p));

    const auto driver = make_driver(cfg.driver, cfg.terminal);
    st.model.a_bar = rep.a_bar;
    st.model.grid = st.problem->grid();
    st.model.f_bar = effective_nonlinearity(driver.f, st.correctors, st.m);
    return st;
}

void write_cell_report(std::ostream& out, const CellReport& r) {
    out << "key,value\n";
    out << "grid_n," << r.grid_n << "\n";
    out << "m_min," << format_number(r.m_min) << "\n";
    out << "m_max," << format_number(r.m_max) << "\n";
    out << "m_mean," << format_number(r.m_mean) << "\n";
    out << "measure_iterations," << r.measure_iterations << "\n";
    out << "measure_residual," << format_number(r.measure_residual) << "\n";
    for (Eigen::Index i = 0; i < r.centering.size(); ++i) {
        out << "centering_residual_" << i + 1 << "," << format_number(r.centering[i]) << "\n";
    }
    for (std::size_t i = 0; i < r.corrector_residuals.size(); ++i) {
        out << "corrector_residual_" << i + 1 << "," << format_number(r.corrector_residuals[i]) << "\n";
    }
    auto matrix = [&](const char* name, const Mat& a) {
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            for (Eigen::Index j = 0; j < a.cols(); ++j) {
                out << name << "_" << i + 1 << j + 1 << "," << format_number(a(i, j)) << "\n";
            }
        }
    };
    matrix("a_bar", r.a_bar);
    matrix("reuss_lower", r.bounds.lower);
    matrix("voigt_upper", r.bounds.upper);
    out << "C_bar,nan\n";
    out << "C_bar_stderr,nan\n";
    for (std::size_t k = 0; k < r.p_list.size(); ++k) {
        for (std::size_t i = 0; i < r.lp[k].size(); ++i) {
            out << "lp_p" << format_number(r.p_list[k]) << "_" << i + 1 << "," << format_number(r.lp[k][i]) << "\n";
        }
    }
}

bool robin_is_constant(const std::string& robin_spec, double* value) {
    const auto spec = parse_family_spec(robin_spec);
    if (spec.name == "zero" && spec.args.empty()) {
        if (value) *value = 0.0;
        return true;
    }
    if (spec.name == "constant" && spec.args.size() == 1) {
        if (value) *value = spec.args[0];
        return true;
    }
    return false;
}

EpsilonResult solve_epsilon_problem(const ExperimentConfig& cfg, double epsilon, std::uint64_t stream,
                                    const CellStage* cell) {
    cfg.validate();
    auto coeffs = make_coefficients(cfg.family, cfg.dim);
    set_robin(coeffs, cfg.robin);
    const auto domain = make_domain(cfg.domain, cfg.dim);
    const auto driver = make_driver(cfg.driver, cfg.terminal);
    const int slabs = cfg.slabs_for(epsilon);
    const SimConfig sc = base_sim(cfg, epsilon, cfg.dt_for(epsilon), slabs, cfg.paths_for(epsilon), stream);
    sc.validate(domain);

    EpsilonResult res;
    res.epsilon = epsilon;
    res.paths = sc.n_paths;
    res.dt = sc.dt;
    res.slabs = slabs;
    {
        const auto ens = simulate_paths(coeffs, domain, sc);
        res.aborted = ens.aborted_count();
        const auto basis = RegressionBasis::parse(cfg.basis, domain);
        BsdeOptions opts;
        opts.threads = cfg.threads;
        const auto sol = solve_bsde(ens, driver, RobinTerm::recorded(), basis, opts);
        res.y0 = sol.y0;
        res.std_error = sol.y0_stderr;
        res.max_abs_y = sol.max_abs_y;
        res.warnings = sol.warnings;
        const auto stats = local_time_stats(ens);
        res.K_mean = stats.mean;
        res.K_sq_mean = stats.second_moment;
        res.boundary_fraction = stats.boundary_fraction;
        double exact = 0.0;
        if (robin_is_constant(cfg.robin, &exact)) {
            res.C_bar = exact;
            res.C_bar_stderr = 0.0;
        } else {
            const auto avg = recorded_robin_average(ens);
            const auto eff = effective_robin(avg, coeffs.alpha);
            res.C_bar = eff.reported;
            res.C_bar_stderr = avg.std_error;
            if (eff.out_of_range) res.warnings.push_back("boundary average of c left [-alpha, 0] beyond two standard errors");
        }
    }
    if (cell != nullptr && cfg.cond_paths > 0) {
        SimConfig ce = sc;
        ce.n_paths = cfg.cond_paths;
        ce.record_events = true;
        ce.seed = derive_seed(cfg.seed, stream + 0x10000);
        const auto events = simulate_paths(coeffs, domain, ce);
        try {
            const auto rep = check_condition_n(cell->correctors, coeffs, events, domain);
            res.cond_n_min = rep.min_form;
            res.cond_n_stderr = rep.min_form_stderr;
        } catch (const PreconditionError& e) {
            res.warnings.push_back(std::string("boundary condition check skipped: ") + e.what());
        }
    }
    return res;
}

HomogenizedResult solve_homogenized(const ExperimentConfig& cfg, const CellStage& cell, double C_bar,
                                    double C_bar_stderr) {
    cfg.validate();
    if (!std::isfinite(C_bar)) throw PreconditionError("effective Robin coefficient is not available");
    const Mat& a_bar = cell.model.a_bar;
    auto coeffs = constant_matrix_family(a_bar);
    const double c = std::min(C_bar, 0.0);
    coeffs.c = [c](const Vec&) { return c; };
    coeffs.alpha = -c;
    const auto domain = make_domain(cfg.domain, cfg.dim);
    auto driver = make_driver(cfg.driver, cfg.terminal);
    driver.f = cell.model.f_bar;

    HomogenizedResult res;
    res.a_bar = a_bar;
    res.C_bar = c;
    res.C_bar_stderr = C_bar_stderr;
    const SimConfig sc = base_sim(cfg, 1.0, cfg.homogenized_dt, cfg.slabs, cfg.homogenized_path_count(), 0x20000);
    sc.validate(domain);
    res.paths = sc.n_paths;
    res.dt = sc.dt;
    res.slabs = cfg.slabs;
    {
        const auto ens = simulate_paths(coeffs, domain, sc);
        res.aborted = ens.aborted_count();
        BsdeOptions opts;
        opts.threads = cfg.threads;
        const auto sol = solve_bsde(ens, driver, RobinTerm::constant(c), RegressionBasis::parse(cfg.basis, domain), opts);
        res.y0 = sol.y0;
        res.std_error = sol.y0_stderr;
        const auto stats = local_time_stats(ens);
        res.K_mean = stats.mean;
        res.K_sq_mean = stats.second_moment;
    }

    const Vec x0 = start_point(cfg);
    if (!is_isotropic(a_bar)) {
        res.oracle_note = "a_bar not isotropic";
    } else if (domain.kind() != DomainKind::Ball) {
        res.oracle_note = "domain is not a ball";
    } else if (x0.norm() > domain.geometric_tolerance()) {
        res.oracle_note = "x0 is not the center";
    } else if (!driver.rotation_invariant) {
        res.oracle_note = "driver is not rotation invariant";
    } else {
        auto problem = RadialProblem::isotropic(a_bar, c, domain.bounding_radius(), cfg.T, cfg.dim);
        const int dim = cfg.dim;
        const auto g = driver.g;
        const auto f = driver.f;
        problem.g_radial = [g, dim](double r) {
            Vec x = Vec::Zero(dim);
            x[0] = r;
            return g(x);
        };
        problem.f_bar_radial = [f, dim](double r, double y, double zr) {
            Vec x = Vec::Zero(dim);
            Vec z = Vec::Zero(dim);
            x[0] = r;
            z[0] = zr;
            return f(x, y, z);
        };
        res.oracle = solve_radial(problem).u_center;
        res.oracle_applicable = true;
        res.oracle_note = "radial reference";
    }
    return res;
}

ConvergenceTable convergence_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.epsilons.size() < 3) throw PreconditionError("convergence sweep needs at least three epsilon values");
    const auto cell = run_cell_stage(cfg);

    std::vector<EpsilonResult> runs;
    for (std::size_t i = 0; i < cfg.epsilons.size(); ++i) {
        runs.push_back(solve_epsilon_problem(cfg, cfg.epsilons[i], i, &cell));
    }
    const auto& finest = runs.back();
    ConvergenceTable table;
    table.a_bar = cell.model.a_bar;
    table.homogenized = solve_homogenized(cfg, cell, finest.C_bar, finest.C_bar_stderr);
    const auto& h = table.homogenized;

    std::vector<double> eps;
    std::vector<double> gaps;
    for (const auto& r : runs) {
        ConvergenceRow row;
        row.route = "epsilon";
        row.epsilon = r.epsilon;
        row.y0 = r.y0;
        row.std_error = r.std_error;
        row.gap = std::abs(r.y0 - h.y0);
        row.gap_stderr = std::hypot(r.std_error, h.std_error);
        row.K_mean = r.K_mean;
        row.K_sq_mean = r.K_sq_mean;
        row.C_bar = r.C_bar;
        row.C_bar_stderr = r.C_bar_stderr;
        row.cond_n_min = r.cond_n_min;
        row.paths = r.paths;
        row.dt = r.dt;
        row.slabs = r.slabs;
        row.aborted = r.aborted;
        if (!table.rows.empty()) {
            const auto& prev = table.rows.back();
            row.non_monotone = row.gap > prev.gap + std::hypot(row.gap_stderr, prev.gap_stderr);
        }
        eps.push_back(row.epsilon);
        gaps.push_back(row.gap);
        table.rows.push_back(row);
    }
    ConvergenceRow hrow;
    hrow.route = "homogenized";
    hrow.epsilon = 0.0;
    hrow.y0 = h.y0;
    hrow.std_error = h.std_error;
    hrow.gap = 0.0;
    hrow.gap_stderr = 0.0;
    hrow.K_mean = h.K_mean;
    hrow.K_sq_mean = h.K_sq_mean;
    hrow.C_bar = h.C_bar;
    hrow.C_bar_stderr = h.C_bar_stderr;
    hrow.paths = h.paths;
    hrow.dt = h.dt;
    hrow.slabs = h.slabs;
    hrow.aborted = h.aborted;
    table.rows.push_back(hrow);
    if (h.oracle_applicable) {
        ConvergenceRow orow;
        orow.route = "reference";
        orow.epsilon = 0.0;
        orow.y0 = h.oracle;
        orow.std_error = 0.0;
        orow.gap = std::abs(h.oracle - h.y0);
        orow.gap_stderr = h.std_error;
        orow.K_mean = std::numeric_limits<double>::quiet_NaN();
        orow.K_sq_mean = std::numeric_limits<double>::quiet_NaN();
        orow.C_bar = h.C_bar;
        orow.C_bar_stderr = h.C_bar_stderr;
        table.rows.push_back(orow);
    }
    table.slope = log_log_slope(eps, gaps);
    return table;
}

void write_convergence_csv(std::ostream& out, const ConvergenceTable& table) {
    out << "epsilon,y0,stderr,gap,gap_stderr,log_epsilon,log_gap,K_mean,K_sq_mean,C_bar,C_bar_stderr,cond_n_min,"
           "paths,dt,slabs,aborted,non_monotone,route\n";
    for (const auto& r : table.rows) {
        const bool eps_row = r.route == "epsilon";
        const double nan = std::numeric_limits<double>::quiet_NaN();
        out << format_number(r.epsilon) << "," << format_number(r.y0) << "," << format_number(r.std_error) << ","
            << format_number(r.gap) << "," << format_number(r.gap_stderr) << ","
            << format_number(eps_row ? std::log(r.epsilon) : nan) << ","
            << format_number(eps_row && r.gap > 0.0 ? std::log(r.gap) : nan) << "," << format_number(r.K_mean) << ","
            << format_number(r.K_sq_mean) << "," << format_number(r.C_bar) << "," << format_number(r.C_bar_stderr)
            << "," << format_number(r.cond_n_min) << "," << r.paths << "," << format_number(r.dt) << "," << r.slabs
            << "," << r.aborted << "," << (r.non_monotone ? 1 : 0) << "," << r.route << "\n";
    }
}

void write_convergence_summary(std::ostream& out, const ConvergenceTable& table) {
    const auto& h = table.homogenized;
    out << "key,value\n";
    for (Eigen::Index i = 0; i < table.a_bar.rows(); ++i) {
        for (Eigen::Index j = 0; j < table.a_bar.cols(); ++j) {
            out << "a_bar_" << i + 1 << j + 1 << "," << format_number(table.a_bar(i, j)) << "\n";
        }
    }
    out << "C_bar," << format_number(h.C_bar) << "\n";
    out << "C_bar_stderr," << format_number(h.C_bar_stderr) << "\n";
    out << "u0," << format_number(h.y0) << "\n";
    out << "u0_stderr," << format_number(h.std_error) << "\n";
    out << "oracle," << format_number(h.oracle) << "\n";
    out << "oracle_applicable," << (h.oracle_applicable ? 1 : 0) << "\n";
    out << "slope," << format_number(table.slope) << "\n";
    bool any_non_monotone = false;
    const ConvergenceRow* first = nullptr;
    const ConvergenceRow* last = nullptr;
    for (const auto& r : table.rows) {
        if (r.route != "epsilon") continue;
        if (!first) first = &r;
        last = &r;
        any_non_monotone = any_non_monotone || r.non_monotone;
    }
    if (first && last) {
        out << "first_gap," << format_number(first->gap) << "\n";
        out << "final_gap," << format_number(last->gap) << "\n";
        out << "final_gap_stderr," << format_number(last->gap_stderr) << "\n";
        out << "gap_decreased," << (last->gap < first->gap ? 1 : 0) << "\n";
    }
    out << "non_monotone," << (any_non_monotone ? 1 : 0) << "\n";
}

AveragingKind parse_averaging_kind(const std::string& name) {
    const auto t = trim(name);
    if (t == "volume") return AveragingKind::Volume;
    if (t == "boundary") return AveragingKind::Boundary;
    throw PreconditionError("averaging kind must be volume or boundary, got '" + name + "'");
}

AveragingTable averaging_diagnostic(const ExperimentConfig& cfg, const TorusScalarFn& psi, AveragingKind kind) {
    cfg.validate();
    auto coeffs = make_coefficients(cfg.family, cfg.dim);
    set_robin(coeffs, cfg.robin);
    const auto domain = make_domain(cfg.domain, cfg.dim);

    AveragingTable table;
    table.kind = kind;
    if (kind == AveragingKind::Volume) {
        const CellProblem problem(coeffs, cfg.grid_n);
        const auto m = solve_invariant_measure(problem);
        const auto& grid = problem.grid();
        double acc = 0.0;
        for (std::size_t j = 0; j < grid.size(); ++j) acc += psi(grid.point(j)) * m.values[static_cast<Eigen::Index>(j)];
        table.centering = acc / static_cast<double>(grid.size());
        if (std::abs(table.centering) > 1e-6) {
            std::ostringstream msg;
            msg << "averaging hypothesis violated: int psi m = " << table.centering << " is not zero";
            throw PreconditionError(msg.str());
        }
    }

    const std::size_t count = cfg.epsilons.size();
    table.rows.resize(count);
    // The finest scale runs first so the boundary centering check can refuse early.
    for (std::size_t k = count; k-- > 0;) {
        const double eps = cfg.epsilons[k];
        SimConfig sc = base_sim(cfg, eps, cfg.dt_for(eps), 1, cfg.paths_for(eps), 0x30000 + k);
        if (kind == AveragingKind::Volume) {
            sc.volume_observables = {psi};
        } else {
            sc.record_events = true;
        }
        sc.validate(domain);
        const auto ens = simulate_paths(coeffs, domain, sc);
        std::vector<double> values;
        for (std::uint64_t p = 0; p < ens.n_paths; ++p) {
            if (ens.aborted[p]) continue;
            if (kind == AveragingKind::Volume) {
                values.push_back(ens.observable(p, 0));
            } else {
                double s = 0.0;
                for (const auto& e : ens.events[p]) s += psi(wrap_to_torus(e.position / eps)) * e.dK;
                values.push_back(s);
            }
        }
        if (values.size() < 2) throw NumericalError("averaging diagnostic: fewer than two completed paths");
        const Eigen::ArrayXd v = Eigen::Map<const Eigen::ArrayXd>(values.data(), static_cast<Eigen::Index>(values.size()));
        auto& row = table.rows[k];
        row.epsilon = eps;
        row.paths = values.size();
        row.dt = sc.dt;
        row.second_moment = v.square().mean();
        row.second_moment_stderr = pooled_stderr(v.square());
        if (kind == AveragingKind::Volume) {
            row.mean = v.mean();
            row.mean_stderr = pooled_stderr(v);
        } else {
            const auto avg = local_time_average(psi, ens);
            row.mean = avg.value;
            row.mean_stderr = avg.std_error;
            if (k + 1 == count) {
                table.centering = avg.value;
                if (std::abs(avg.value) > 3.0 * avg.std_error + 1e-12) {
                    std::ostringstream msg;
                    msg << "averaging hypothesis violated: boundary average of psi = " << avg.value << " +- "
                        << avg.std_error << " is not zero";
                    throw PreconditionError(msg.str());
                }
            }
        }
    }
    std::vector<double> eps;
    std::vector<double> moments;
    for (const auto& r : table.rows) {
        eps.push_back(r.epsilon);
        moments.push_back(r.second_moment);
    }
    table.slope = log_log_slope(eps, moments);
    return table;
}

void write_averaging_csv(std::ostream& out, const AveragingTable& table) {
    const char* kind = table.kind == AveragingKind::Volume ? "volume" : "boundary";
    out << "epsilon,second_moment,second_moment_stderr,mean,mean_stderr,log_epsilon,log_second_moment,paths,dt,kind\n";
    for (const auto& r : table.rows) {
        out << format_number(r.epsilon) << "," << format_number(r.second_moment) << ","
            << format_number(r.second_moment_stderr) << "," << format_number(r.mean) << ","
            << format_number(r.mean_stderr) << "," << format_number(std::log(r.epsilon)) << ","
            << format_number(r.second_moment > 0.0 ? std::log(r.second_moment) : std::numeric_limits<double>::quiet_NaN())
            << "," << r.paths << "," << format_number(r.dt) << "," << kind << "\n";
    }
}

void write_averaging_summary(std::ostream& out, const AveragingTable& table) {
    out << "key,value\n";
    out << "kind," << (table.kind == AveragingKind::Volume ? "volume" : "boundary") << "\n";
    out << "centering," << format_number(table.centering) << "\n";
    out << "slope," << format_number(table.slope) << "\n";
}

}  // namespace robin_homog
