#include "robin_homog/boundary_measure.hpp"
#include "robin_homog/bsde.hpp"
#include "robin_homog/families.hpp"
#include "robin_homog/harness.hpp"
#include "robin_homog/reference_solver.hpp"
#include "robin_homog/reflected_sde.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
namespace rh = robin_homog;

namespace {

rh::RobinTerm robin_term(const py::object& spec) {
    if (spec.is_none()) return rh::RobinTerm::none();
    if (py::isinstance<py::float_>(spec) || py::isinstance<py::int_>(spec)) {
        return rh::RobinTerm::constant(spec.cast<double>());
    }
    const auto text = spec.cast<std::string>();
    if (text == "none") return rh::RobinTerm::none();
    if (text == "recorded") return rh::RobinTerm::recorded();
    throw rh::PreconditionError("robin must be None, 'none', 'recorded' or a number, got '" + text + "'");
}

template <typename Writer, typename Table>
std::string to_csv(Writer writer, const Table& table) {
    std::ostringstream out;
    writer(out, table);
    return out.str();
}

}  // namespace

PYBIND11_MODULE(_robin_homog, m) {
    m.doc() = "Periodic homogenization of Robin problems through reflected diffusions and backward regression.";

    py::register_exception<rh::PreconditionError>(m, "PreconditionError", PyExc_ValueError);
    py::register_exception<rh::NumericalError>(m, "NumericalError", PyExc_RuntimeError);

    py::class_<rh::ExperimentConfig>(m, "ExperimentConfig")
        .def(py::init<>())
        .def("set", &rh::ExperimentConfig::set, py::arg("key"), py::arg("value"))
        .def("validate", &rh::ExperimentConfig::validate)
        .def("to_text", &rh::ExperimentConfig::to_text)
        .def_readwrite("dim", &rh::ExperimentConfig::dim)
        .def_readwrite("family", &rh::ExperimentConfig::family)
        .def_readwrite("robin", &rh::ExperimentConfig::robin)
        .def_readwrite("domain", &rh::ExperimentConfig::domain)
        .def_readwrite("driver", &rh::ExperimentConfig::driver)
        .def_readwrite("terminal", &rh::ExperimentConfig::terminal)
        .def_readwrite("T", &rh::ExperimentConfig::T)
        .def_readwrite("epsilons", &rh::ExperimentConfig::epsilons)
        .def_readwrite("dt_factor", &rh::ExperimentConfig::dt_factor)
        .def_readwrite("paths", &rh::ExperimentConfig::paths)
        .def_readwrite("slabs", &rh::ExperimentConfig::slabs)
        .def_readwrite("basis", &rh::ExperimentConfig::basis)
        .def_readwrite("seed", &rh::ExperimentConfig::seed)
        .def_readwrite("threads", &rh::ExperimentConfig::threads)
        .def_readwrite("grid_n", &rh::ExperimentConfig::grid_n)
        .def("__repr__", [](const rh::ExperimentConfig& c) { return "<ExperimentConfig\n" + c.to_text() + ">"; });

    m.def("parse_config", &rh::parse_config, py::arg("text"));
    m.def("load_config", &rh::load_config, py::arg("path"));

    m.def(
        "cell",
        [](const rh::ExperimentConfig& cfg) {
            const auto stage = rh::run_cell_stage(cfg);
            const auto& r = stage.report;
            py::dict out;
            out["a_bar"] = r.a_bar;
            out["reuss_lower"] = r.bounds.lower;
            out["voigt_upper"] = r.bounds.upper;
            out["m_min"] = r.m_min;
            out["m_max"] = r.m_max;
            out["centering"] = r.centering;
            out["measure_iterations"] = r.measure_iterations;
            out["p_list"] = r.p_list;
            out["lp"] = r.lp;
            out["csv"] = to_csv(rh::write_cell_report, r);
            return out;
        },
        py::arg("config"), "Cell stage: invariant measure, correctors, effective diffusion and L^p table.");

    py::class_<rh::ReflectedPathEnsemble>(m, "Ensemble")
        .def_static("load", &rh::ReflectedPathEnsemble::load, py::arg("path"))
        .def("save", &rh::ReflectedPathEnsemble::save, py::arg("path"))
        .def_readonly("dim", &rh::ReflectedPathEnsemble::dim)
        .def_readonly("steps", &rh::ReflectedPathEnsemble::steps)
        .def_readonly("n_paths", &rh::ReflectedPathEnsemble::n_paths)
        .def_readonly("dt", &rh::ReflectedPathEnsemble::dt)
        .def_readonly("epsilon", &rh::ReflectedPathEnsemble::epsilon)
        .def_readonly("record_stride", &rh::ReflectedPathEnsemble::record_stride)
        .def_property_readonly("slabs", &rh::ReflectedPathEnsemble::slabs)
        .def("local_times",
             [](const rh::ReflectedPathEnsemble& e) {
                 Eigen::VectorXd k(static_cast<Eigen::Index>(e.n_paths));
                 for (std::uint64_t p = 0; p < e.n_paths; ++p) k[static_cast<Eigen::Index>(p)] = e.local_time(p);
                 return k;
             })
        .def("weighted_local_times",
             [](const rh::ReflectedPathEnsemble& e) {
                 Eigen::VectorXd k(static_cast<Eigen::Index>(e.n_paths));
                 for (std::uint64_t p = 0; p < e.n_paths; ++p) k[static_cast<Eigen::Index>(p)] = e.weighted_local_time(p);
                 return k;
             })
        .def(
            "states",
            [](const rh::ReflectedPathEnsemble& e, std::uint64_t slab) {
                if (slab > e.slabs()) throw rh::PreconditionError("slab index out of range");
                Eigen::MatrixXd x(static_cast<Eigen::Index>(e.n_paths), e.dim);
                for (std::uint64_t p = 0; p < e.n_paths; ++p) x.row(static_cast<Eigen::Index>(p)) = e.state(p, slab).transpose();
                return x;
            },
            py::arg("slab"), "States of every path at a recorded slab, one row per path.")
        .def("aborted", [](const rh::ReflectedPathEnsemble& e) {
            return std::vector<bool>(e.aborted.begin(), e.aborted.end());
        });

    m.def(
        "simulate",
        [](const std::string& family, const std::string& robin, const std::string& domain, int dim, double epsilon,
           double T, double dt, std::size_t paths, std::uint64_t seed, std::optional<rh::Vec> x0, int record_stride,
           bool events, const std::string& scheme, int threads) {
            auto coeffs = rh::make_coefficients(family, dim);
            rh::set_robin(coeffs, robin);
            const auto dom = rh::make_domain(domain, dim);
            rh::SimConfig cfg;
            cfg.epsilon = epsilon;
            cfg.T = T;
            cfg.dt = dt;
            cfg.n_paths = paths;
            cfg.seed = seed;
            cfg.x0 = x0 ? *x0 : rh::Vec::Zero(dim);
            cfg.record_stride = record_stride;
            cfg.record_events = events;
            cfg.scheme = rh::parse_reflection_scheme(scheme);
            cfg.threads = threads;
            py::gil_scoped_release release;
            return rh::simulate_paths(coeffs, dom, cfg);
        },
        py::arg("family") = "identity", py::arg("robin") = "zero", py::arg("domain") = "disk(1)", py::arg("dim") = 2,
        py::arg("epsilon") = 1.0, py::arg("T") = 0.5, py::arg("dt") = 1e-3, py::arg("paths") = 1000,
        py::arg("seed") = 1, py::arg("x0") = py::none(), py::arg("record_stride") = 1, py::arg("events") = false,
        py::arg("scheme") = "bridge", py::arg("threads") = 0);

    m.def(
        "solve_bsde",
        [](const rh::ReflectedPathEnsemble& ensemble, const std::string& driver, const std::string& terminal,
           const py::object& robin, const std::string& basis, const std::string& domain, int threads) {
            const auto term = robin_term(robin);
            const auto dom = rh::make_domain(domain, ensemble.dim);
            const auto b = rh::RegressionBasis::parse(basis, dom);
            rh::BsdeOptions opts;
            opts.threads = threads;
            const auto drv = rh::make_driver(driver, terminal);
            rh::BsdeSolution sol;
            {
                py::gil_scoped_release release;
                sol = rh::solve_bsde(ensemble, drv, term, b, opts);
            }
            py::dict out;
            out["y0"] = sol.y0;
            out["stderr"] = sol.y0_stderr;
            out["max_abs_y"] = sol.max_abs_y;
            out["y_bound"] = sol.y_bound;
            out["paths_used"] = sol.paths_used;
            out["warnings"] = sol.warnings;
            return out;
        },
        py::arg("ensemble"), py::arg("driver") = "zero", py::arg("terminal") = "one", py::arg("robin") = "recorded",
        py::arg("basis") = "deg=4", py::arg("domain") = "disk(1)", py::arg("threads") = 0);

    m.def(
        "solve_radial",
        [](double sigma2, double c_bar, double radius, double T, int dim, int nr, int nt, const std::string& driver,
           const std::string& terminal) {
            const auto drv = rh::make_driver(driver, terminal);
            if (!drv.rotation_invariant) throw rh::PreconditionError("oracle inapplicable: driver is not rotation invariant");
            rh::RadialProblem p;
            p.a_bar_scalar = sigma2;
            p.C_bar = c_bar;
            p.R = radius;
            p.T = T;
            p.dim = dim;
            p.nr = nr;
            p.nt = nt;
            p.g_radial = [&drv, dim](double r) {
                rh::Vec x = rh::Vec::Zero(dim);
                x[0] = r;
                return drv.g(x);
            };
            p.f_bar_radial = [&drv, dim](double r, double y, double zr) {
                rh::Vec x = rh::Vec::Zero(dim);
                rh::Vec z = rh::Vec::Zero(dim);
                x[0] = r;
                z[0] = zr;
                return drv.f(x, y, z);
            };
            const auto sol = rh::solve_radial(p);
            return py::make_tuple(sol.r, sol.u, sol.u_center);
        },
        py::arg("sigma2") = 1.0, py::arg("c_bar") = -1.0, py::arg("radius") = 1.0, py::arg("T") = 0.5,
        py::arg("dim") = 2, py::arg("nr") = 400, py::arg("nt") = 800, py::arg("driver") = "zero",
        py::arg("terminal") = "one", "Radial reference solve; returns (r, u(0, r), u(0, 0)).");

    m.def(
        "convergence",
        [](const rh::ExperimentConfig& cfg) {
            rh::ConvergenceTable table;
            {
                py::gil_scoped_release release;
                table = rh::convergence_sweep(cfg);
            }
            return py::make_tuple(to_csv(rh::write_convergence_csv, table), to_csv(rh::write_convergence_summary, table));
        },
        py::arg("config"), "Convergence sweep; returns (convergence CSV, summary CSV) as text.");

    m.def(
        "averaging",
        [](const rh::ExperimentConfig& cfg, const std::string& psi, const std::string& kind) {
            const auto fn = rh::make_torus_function(psi, cfg.dim);
            const auto k = rh::parse_averaging_kind(kind);
            rh::AveragingTable table;
            {
                py::gil_scoped_release release;
                table = rh::averaging_diagnostic(cfg, fn, k);
            }
            return py::make_tuple(to_csv(rh::write_averaging_csv, table), to_csv(rh::write_averaging_summary, table));
        },
        py::arg("config"), py::arg("psi") = "sin(1)", py::arg("kind") = "volume");

    m.def("format_number", &rh::format_number, py::arg("value"));
}
