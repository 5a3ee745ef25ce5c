#pragma once

#include "robin_homog/torus_grid.hpp"
#include "robin_homog/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace robin_homog {

/// Periodic coefficients of L = 1/2 div(A grad) + b.grad on the torus, plus the
/// Robin coefficient c. Immutable after construction and safe to share across threads.
struct PeriodicCoefficients {
    int dim = 2;
    TorusMatrixFn A;
    /// Component i is sum_j d a_ij / d x_j, supplied analytically.
    TorusVectorFn divA;
    TorusVectorFn b;
    TorusScalarFn c;
    double alpha = 0.0;
    double lambda = 1.0;
    std::string name;

    /// Effective drift 1/2 divA + b of the non-divergence form.
    Vec drift_tilde(const Vec& y) const { return 0.5 * divA(y) + b(y); }
};

/// Nonlinearity f(x, y, z) and terminal data g with the bounds the solvers rely on.
struct Driver {
    std::function<double(const Vec& x, double y, const Vec& z)> f;
    double c1_bound = 0.0;
    double c2 = 0.0;
    std::function<double(const Vec& x)> g;
    /// sup |g| over the closed domain.
    double g_sup = 0.0;
    /// sup |f| over the range the solution can reach; declared, not computed.
    double f_sup = 0.0;
    /// f(Qx, y, Qz) = f(x, y, z) and g(Qx) = g(x) for rotations Q about the origin.
    bool rotation_invariant = false;
    std::string name;
};

/// Smooth positive periodic function together with its gradient.
struct SmoothTorusFunction {
    TorusScalarFn value;
    TorusVectorFn gradient;
};

/// Node tabulation of the coefficient fields on a uniform torus grid.
struct GridCoefficients {
    TorusGrid grid;
    std::vector<Mat> A;
    std::vector<Vec> divA;
    std::vector<Vec> b;
    std::vector<Vec> b_tilde;
    std::vector<double> c;
};

inline constexpr std::size_t kDefaultGridNodeCap = std::size_t{1} << 24;

/// Tabulate A, divA, b, b~ = 1/2 divA + b and c at the nodes k/n.
GridCoefficients sample_on_grid(const PeriodicCoefficients& coeffs, int n,
                                std::size_t max_nodes = kDefaultGridNodeCap);

/// Drift b = 1/2 A grad(m) / m, for which L* m = 0 and the centering condition hold
/// identically. Rejects m that is not strictly positive or not of unit mean.
TorusVectorFn make_admissible_drift(int dim, const TorusMatrixFn& A, const SmoothTorusFunction& m_target);

struct ValidationReport {
    double rayleigh_min = 0.0;
    double rayleigh_max = 0.0;
    double c_min = 0.0;
    double c_max = 0.0;
    double periodicity_residual = 0.0;
    double symmetry_residual = 0.0;
    bool ellipticity_ok = false;
    bool c_range_ok = false;
    bool periodicity_ok = false;
    bool symmetry_ok = false;

    bool ok() const { return ellipticity_ok && c_range_ok && periodicity_ok && symmetry_ok; }
    std::string summary() const;
};

/// Report-only check of ellipticity, Robin range, periodicity and symmetry over a
/// sample grid and a fixed set of unit test directions.
ValidationReport validate(const PeriodicCoefficients& coeffs, int n_samples = 24);

struct DriverCheck {
    bool monotone_ok = true;
    bool lipschitz_ok = true;
    double worst_monotone_excess = 0.0;
    double worst_lipschitz_ratio = 0.0;
};

/// Random-probe check of the one-sided Lipschitz bound in y and the Lipschitz bound in z.
DriverCheck spot_check_driver(const Driver& driver, int dim, std::uint64_t seed = 7, int probes = 2000);

}  // namespace robin_homog
