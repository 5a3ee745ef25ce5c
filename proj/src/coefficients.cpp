#include "robin_homog/coefficients.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace robin_homog {

GridCoefficients sample_on_grid(const PeriodicCoefficients& coeffs, int n, std::size_t max_nodes) {
    if (n < 4) throw PreconditionError("grid resolution must be at least 4");
    const double nodes = std::pow(static_cast<double>(n), coeffs.dim);
    if (nodes > static_cast<double>(max_nodes)) {
        std::ostringstream msg;
        msg << "grid of " << n << "^" << coeffs.dim << " nodes exceeds the configured cap of " << max_nodes
            << " nodes";
        throw PreconditionError(msg.str());
    }
    GridCoefficients out;
    out.grid = TorusGrid(coeffs.dim, n);
    const auto size = out.grid.size();
    out.A.resize(size);
    out.divA.resize(size);
    out.b.resize(size);
    out.b_tilde.resize(size);
    out.c.resize(size);
    for (std::size_t k = 0; k < size; ++k) {
        const Vec y = out.grid.point(k);
        out.A[k] = coeffs.A(y);
        out.divA[k] = coeffs.divA(y);
        out.b[k] = coeffs.b(y);
        out.b_tilde[k] = 0.5 * out.divA[k] + out.b[k];
        out.c[k] = coeffs.c ? coeffs.c(y) : 0.0;
    }
    return out;
}

TorusVectorFn make_admissible_drift(int dim, const TorusMatrixFn& A, const SmoothTorusFunction& m_target) {
    // Quadrature check on a 128^d grid (periodic trapezoid, spectrally accurate for smooth m).
    const int n = dim <= 2 ? 128 : 48;
    const TorusGrid grid(dim, n);
    double sum = 0.0;
    double min_value = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double v = m_target.value(grid.point(k));
        sum += v;
        min_value = std::min(min_value, v);
    }
    if (!(min_value > 0.0)) {
        throw PreconditionError("target invariant density must be strictly positive (min " +
                                std::to_string(min_value) + ")");
    }
    const double mean = sum / static_cast<double>(grid.size());
    if (std::abs(mean - 1.0) > 1e-8) {
        throw PreconditionError("target invariant density must have unit mean (mean " + std::to_string(mean) + ")");
    }
    return [A, m_target](const Vec& y) -> Vec { return 0.5 * A(y) * m_target.gradient(y) / m_target.value(y); };
}

namespace {

std::vector<Vec> test_directions(int dim) {
    std::vector<Vec> dirs;
    for (int i = 0; i < dim; ++i) {
        Vec e = Vec::Zero(dim);
        e[i] = 1.0;
        dirs.push_back(e);
    }
    for (int i = 0; i < dim; ++i) {
        for (int j = i + 1; j < dim; ++j) {
            for (double s : {1.0, -1.0}) {
                Vec e = Vec::Zero(dim);
                e[i] = 1.0;
                e[j] = s;
                dirs.push_back(e.normalized());
            }
        }
    }
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> normal;
    for (int r = 0; r < 8; ++r) {
        Vec e(dim);
        for (int i = 0; i < dim; ++i) e[i] = normal(rng);
        dirs.push_back(e.normalized());
    }
    return dirs;
}

}  // namespace

ValidationReport validate(const PeriodicCoefficients& coeffs, int n_samples) {
    ValidationReport rep;
    rep.rayleigh_min = std::numeric_limits<double>::infinity();
    rep.rayleigh_max = -std::numeric_limits<double>::infinity();
    rep.c_min = std::numeric_limits<double>::infinity();
    rep.c_max = -std::numeric_limits<double>::infinity();
    const int dim = coeffs.dim;
    const auto dirs = test_directions(dim);
    const TorusGrid grid(dim, std::max(2, n_samples));
    // Shifted sample points so that validation does not only see the solver grid.
    const double shift = 0.37 / grid.n();
    for (std::size_t k = 0; k < grid.size(); ++k) {
        Vec y = grid.point(k);
        y.array() += shift;
        const Mat a = coeffs.A(y);
        rep.symmetry_residual = std::max(rep.symmetry_residual, (a - a.transpose()).cwiseAbs().maxCoeff());
        for (const auto& xi : dirs) {
            const double q = xi.dot(a * xi);
            rep.rayleigh_min = std::min(rep.rayleigh_min, q);
            rep.rayleigh_max = std::max(rep.rayleigh_max, q);
        }
        const double cv = coeffs.c ? coeffs.c(y) : 0.0;
        rep.c_min = std::min(rep.c_min, cv);
        rep.c_max = std::max(rep.c_max, cv);
        for (int i = 0; i < dim; ++i) {
            Vec yi = y;
            yi[i] += 1.0;
            double res = (coeffs.A(yi) - a).cwiseAbs().maxCoeff();
            res = std::max(res, (coeffs.divA(yi) - coeffs.divA(y)).cwiseAbs().maxCoeff());
            res = std::max(res, (coeffs.b(yi) - coeffs.b(y)).cwiseAbs().maxCoeff());
            if (coeffs.c) res = std::max(res, std::abs(coeffs.c(yi) - cv));
            rep.periodicity_residual = std::max(rep.periodicity_residual, res);
        }
    }
    const double lam = coeffs.lambda;
    const double tol = 1e-12;
    rep.ellipticity_ok = rep.rayleigh_min >= 1.0 / lam - tol && rep.rayleigh_max <= lam + tol && rep.rayleigh_min > 0.0;
    rep.c_range_ok = rep.c_min >= -coeffs.alpha - tol && rep.c_max <= tol;
    rep.periodicity_ok = rep.periodicity_residual <= 1e-10;
    rep.symmetry_ok = rep.symmetry_residual <= 1e-12;
    return rep;
}

std::string ValidationReport::summary() const {
    std::ostringstream os;
    os << "rayleigh=[" << rayleigh_min << ", " << rayleigh_max << "] " << (ellipticity_ok ? "pass" : "FAIL")
       << "; c=[" << c_min << ", " << c_max << "] " << (c_range_ok ? "pass" : "FAIL")
       << "; periodicity=" << periodicity_residual << " " << (periodicity_ok ? "pass" : "FAIL")
       << "; symmetry=" << symmetry_residual << " " << (symmetry_ok ? "pass" : "FAIL");
    return os.str();
}

DriverCheck spot_check_driver(const Driver& driver, int dim, std::uint64_t seed, int probes) {
    DriverCheck out;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    auto rand_vec = [&](double scale) {
        Vec v(dim);
        for (int i = 0; i < dim; ++i) v[i] = scale * unif(rng);
        return v;
    };
    for (int p = 0; p < probes; ++p) {
        const Vec x = rand_vec(1.0);
        const Vec z = rand_vec(3.0);
        const double y1 = 3.0 * unif(rng);
        double y2 = 3.0 * unif(rng);
        if (y1 == y2) y2 += 0.5;
        const double lhs = (y1 - y2) * (driver.f(x, y1, z) - driver.f(x, y2, z));
        const double rhs = driver.c1_bound * (y1 - y2) * (y1 - y2);
        const double excess = lhs - rhs;
        out.worst_monotone_excess = std::max(out.worst_monotone_excess, excess);
        if (excess > 1e-12 * (1.0 + std::abs(rhs))) out.monotone_ok = false;

        const Vec z2 = rand_vec(3.0);
        const double dz = (z - z2).norm();
        if (dz > 0) {
            const double ratio = std::abs(driver.f(x, y1, z) - driver.f(x, y1, z2)) / dz;
            out.worst_lipschitz_ratio = std::max(out.worst_lipschitz_ratio, ratio);
            if (ratio > driver.c2 + 1e-12) out.lipschitz_ok = false;
        }
    }
    return out;
}

}  // namespace robin_homog
