#pragma once

#include "robin_homog/cell_solver.hpp"
#include "robin_homog/coefficients.hpp"
#include "robin_homog/domain.hpp"
#include "robin_homog/reflected_sde.hpp"

#include <cstdint>
#include <vector>

namespace robin_homog {

/// Local-time weighted average sum h(X/eps) dK / sum dK over an ensemble.
struct BoundaryAverage {
    double value = 0.0;
    double std_error = 0.0;
    double total_local_time = 0.0;
    std::uint64_t n_paths_used = 0;
};

/// Ratio sum_p a_p / sum_p b_p with a jackknife-over-paths standard error.
/// Paths with b_p = 0 still count towards the path total.
BoundaryAverage jackknife_ratio(const std::vector<double>& numerators, const std::vector<double>& denominators);

/// Average of h over the boundary contacts of an ensemble recorded with events.
BoundaryAverage local_time_average(const TorusScalarFn& h, const ReflectedPathEnsemble& ensemble);

/// Average of the Robin coefficient from the c-weighted local-time channel, which
/// needs no recorded events.
BoundaryAverage recorded_robin_average(const ReflectedPathEnsemble& ensemble);

struct EffectiveRobin {
    BoundaryAverage average;
    /// Point estimate clamped to [-alpha, 0].
    double reported = 0.0;
    /// The raw estimate left [-alpha, 0] by more than two standard errors.
    bool out_of_range = false;
};

EffectiveRobin effective_robin(const TorusScalarFn& c, double alpha, const ReflectedPathEnsemble& ensemble);
EffectiveRobin effective_robin(const BoundaryAverage& average, double alpha);

struct ConditionNReport {
    /// Entry (i, j) estimates the boundary average of (A grad w~)_ij.
    Mat matrix;
    Mat matrix_stderr;
    double min_form = 0.0;
    /// Propagated standard error of the quadratic form at the minimizing sample.
    double min_form_stderr = 0.0;
};

/// Minimum over boundary samples x of <M grad psi(x), grad psi(x)> with M the
/// local-time average of A grad w~. Requires an ensemble recorded with events.
ConditionNReport check_condition_n(const CorrectorSet& correctors, const PeriodicCoefficients& coeffs,
                                   const ReflectedPathEnsemble& ensemble, const ConvexDomain& domain,
                                   int boundary_samples = 256);

}  // namespace robin_homog
