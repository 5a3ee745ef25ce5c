#pragma once

#include "robin_homog/bsde.hpp"
#include "robin_homog/cell_solver.hpp"
#include "robin_homog/coefficients.hpp"
#include "robin_homog/domain.hpp"
#include "robin_homog/reflected_sde.hpp"

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace robin_homog {

/// Settings that may differ between the epsilon runs of one experiment.
struct EpsilonOverride {
    std::optional<double> dt;
    std::optional<std::size_t> paths;
    std::optional<int> slabs;
};

/// Experiment description read from a flat `key = value` file; see the README for the schema.
struct ExperimentConfig {
    int dim = 2;
    std::string family = "layered(0.5)";
    std::string robin = "oscillating(-1,0.5)";
    std::string domain = "disk(1)";
    std::string driver = "decay-gradient(1,0.1)";
    std::string terminal = "bowl";
    Vec x0;
    double T = 0.5;
    std::vector<double> epsilons{0.5, 0.25, 0.125};
    /// dt = dt_factor * epsilon^2 unless overridden.
    double dt_factor = 0.0025;
    std::size_t paths = 200000;
    /// Backward-regression slabs per run.
    int slabs = 100;
    std::string basis = "deg=4";
    ReflectionScheme scheme = ReflectionScheme::Bridge;
    std::string output_dir = ".";
    std::uint64_t seed = 2024;
    int threads = 0;
    int grid_n = 128;
    std::vector<double> p_list{2.0, 4.0};
    double homogenized_dt = 1e-3;
    std::size_t homogenized_paths = 0;
    /// Paths of the event-recording ensemble for the boundary condition check; 0 disables it.
    std::size_t cond_paths = 1000;
    std::string psi = "sin(1)";
    std::string diagnostic_kind = "volume";
    double dk_max = 1.0;
    std::map<double, EpsilonOverride> overrides;

    /// Applies one `key = value` setting; unknown keys are a PreconditionError.
    void set(const std::string& key, const std::string& value);
    /// Throws PreconditionError on inconsistent settings.
    void validate() const;
    /// Canonical `key = value` listing, parseable by parse_config.
    std::string to_text() const;

    double dt_for(double epsilon) const;
    std::size_t paths_for(double epsilon) const;
    int slabs_for(double epsilon) const;
    std::size_t homogenized_path_count() const { return homogenized_paths > 0 ? homogenized_paths : paths; }
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// "disk(R)", "ball(R)", "ellipse(a,b)" or "ellipsoid(a,b,c)", centered at the origin.
ConvexDomain make_domain(const std::string& spec, int dim);

/// "zero", "one", "sin(i)" = sin(2 pi eta_i) or "cos(i)" = cos(2 pi eta_i), i counted from 1.
TorusScalarFn make_torus_function(const std::string& spec, int dim);

/// Independent stream seed for run `stream` of an experiment.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// Step count that is a multiple of `slabs` and makes dt no larger than `dt_target`.
std::size_t aligned_steps(double T, double dt_target, int slabs);

struct CellReport {
    int grid_n = 0;
    double m_min = 0.0;
    double m_max = 0.0;
    double m_mean = 0.0;
    int measure_iterations = 0;
    double measure_residual = 0.0;
    Vec centering;
    std::vector<double> corrector_residuals;
    Mat a_bar;
    VoigtReussBounds bounds;
    std::vector<double> p_list;
    /// lp[k][i] = ||e_i + grad omega_i||_{L^p_k}.
    std::vector<std::vector<double>> lp;
};

/// Cell solve results shared by the pipeline stages.
struct CellStage {
    PeriodicCoefficients coeffs;
    std::unique_ptr<CellProblem> problem;
    TorusField m;
    CorrectorSet correctors;
    EffectiveModel model;
    CellReport report;
};

CellStage run_cell_stage(const ExperimentConfig& cfg);

/// key,value rows; C_bar is left as nan since it needs a boundary ensemble.
void write_cell_report(std::ostream& out, const CellReport& report);

struct EpsilonResult {
    double epsilon = 0.0;
    double y0 = 0.0;
    double std_error = 0.0;
    double K_mean = 0.0;
    double K_sq_mean = 0.0;
    double boundary_fraction = 0.0;
    double C_bar = 0.0;
    double C_bar_stderr = 0.0;
    double cond_n_min = std::numeric_limits<double>::quiet_NaN();
    double cond_n_stderr = std::numeric_limits<double>::quiet_NaN();
    std::size_t paths = 0;
    double dt = 0.0;
    int slabs = 0;
    std::uint64_t aborted = 0;
    double max_abs_y = 0.0;
    std::vector<std::string> warnings;
};

/// u^eps(0, x0) from the reflected diffusion at scale eps and the backward regression.
/// `stream` selects the random stream; `cell` supplies the correctors for the boundary check.
EpsilonResult solve_epsilon_problem(const ExperimentConfig& cfg, double epsilon, std::uint64_t stream,
                                    const CellStage* cell = nullptr);

struct HomogenizedResult {
    double y0 = 0.0;
    double std_error = 0.0;
    Mat a_bar;
    double C_bar = 0.0;
    double C_bar_stderr = 0.0;
    double K_mean = 0.0;
    double K_sq_mean = 0.0;
    std::size_t paths = 0;
    double dt = 0.0;
    int slabs = 0;
    std::uint64_t aborted = 0;
    bool oracle_applicable = false;
    double oracle = std::numeric_limits<double>::quiet_NaN();
    std::string oracle_note;
};

/// u^0(0, x0) for the constant-coefficient problem (a_bar, C_bar, f_bar); also solves
/// the radial reference when the data are isotropic and radial.
HomogenizedResult solve_homogenized(const ExperimentConfig& cfg, const CellStage& cell, double C_bar,
                                    double C_bar_stderr);

/// True for the zero and constant Robin families, whose C_bar is then exact and stored in *value.
bool robin_is_constant(const std::string& robin_spec, double* value);

struct ConvergenceRow {
    std::string route;
    double epsilon = 0.0;
    double y0 = 0.0;
    double std_error = 0.0;
    double gap = 0.0;
    double gap_stderr = 0.0;
    double K_mean = 0.0;
    double K_sq_mean = 0.0;
    double C_bar = 0.0;
    double C_bar_stderr = 0.0;
    double cond_n_min = std::numeric_limits<double>::quiet_NaN();
    std::size_t paths = 0;
    double dt = 0.0;
    int slabs = 0;
    std::uint64_t aborted = 0;
    bool non_monotone = false;
};

struct ConvergenceTable {
    std::vector<ConvergenceRow> rows;
    HomogenizedResult homogenized;
    /// Least-squares slope of log gap against log epsilon over positive gaps; nan if fewer than two.
    double slope = std::numeric_limits<double>::quiet_NaN();
    Mat a_bar;
};

ConvergenceTable convergence_sweep(const ExperimentConfig& cfg);

void write_convergence_csv(std::ostream& out, const ConvergenceTable& table);
void write_convergence_summary(std::ostream& out, const ConvergenceTable& table);

enum class AveragingKind { Volume, Boundary };
AveragingKind parse_averaging_kind(const std::string& name);

struct AveragingRow {
    double epsilon = 0.0;
    double second_moment = 0.0;
    double second_moment_stderr = 0.0;
    /// Volume: ensemble mean of the integral; boundary: local-time average of psi.
    double mean = 0.0;
    double mean_stderr = 0.0;
    std::size_t paths = 0;
    double dt = 0.0;
};

struct AveragingTable {
    AveragingKind kind = AveragingKind::Volume;
    std::vector<AveragingRow> rows;
    double slope = std::numeric_limits<double>::quiet_NaN();
    /// Volume: quadrature of psi m; boundary: local-time average at the finest epsilon.
    double centering = 0.0;
};

/// Second moments of int psi(X / eps) dr (volume) or int psi(X / eps) dK (boundary)
/// over the configured epsilons.
AveragingTable averaging_diagnostic(const ExperimentConfig& cfg, const TorusScalarFn& psi, AveragingKind kind);

void write_averaging_csv(std::ostream& out, const AveragingTable& table);
void write_averaging_summary(std::ostream& out, const AveragingTable& table);

/// Fixed-format number used in every CSV: %.10g, with nan and inf spelled out.
std::string format_number(double v);

/// Least-squares slope of log y against log x over entries with x, y > 0.
double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace robin_homog
