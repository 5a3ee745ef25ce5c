#include "robin_homog/boundary_measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace robin_homog {

BoundaryAverage jackknife_ratio(const std::vector<double>& numerators, const std::vector<double>& denominators) {
    if (numerators.size() != denominators.size()) throw PreconditionError("ratio inputs differ in length");
    BoundaryAverage out;
    double a = 0.0;
    double b = 0.0;
    for (std::size_t p = 0; p < numerators.size(); ++p) {
        a += numerators[p];
        b += denominators[p];
    }
    out.total_local_time = b;
    out.n_paths_used = numerators.size();
    if (!(b > 0.0)) {
        throw PreconditionError("no boundary contact: zero total local time; use a longer horizon or a boundary start");
    }
    out.value = a / b;
    const double n = static_cast<double>(numerators.size());
    std::size_t contributing = 0;
    double sq = 0.0;
    for (std::size_t p = 0; p < numerators.size(); ++p) {
        if (denominators[p] == 0.0 && numerators[p] == 0.0) continue;
        ++contributing;
        const double rest = b - denominators[p];
        if (!(rest > 0.0)) continue;
        const double loo = (a - numerators[p]) / rest;
        sq += (loo - out.value) * (loo - out.value);
    }
    // Leave-one-out values of non-contributing paths equal the full estimate.
    out.std_error = contributing < 2 ? std::numeric_limits<double>::infinity() : std::sqrt((n - 1.0) / n * sq);
    return out;
}

BoundaryAverage local_time_average(const TorusScalarFn& h, const ReflectedPathEnsemble& ensemble) {
    if (ensemble.events.empty()) {
        throw PreconditionError("local-time averages of arbitrary functions need an ensemble recorded with events");
    }
    std::vector<double> num;
    std::vector<double> den;
    for (std::uint64_t p = 0; p < ensemble.n_paths; ++p) {
        if (ensemble.aborted[p]) continue;
        double a = 0.0;
        double b = 0.0;
        for (const auto& e : ensemble.events[p]) {
            a += h(e.position / ensemble.epsilon) * e.dK;
            b += e.dK;
        }
        num.push_back(a);
        den.push_back(b);
    }
    return jackknife_ratio(num, den);
}

BoundaryAverage recorded_robin_average(const ReflectedPathEnsemble& ensemble) {
    std::vector<double> num;
    std::vector<double> den;
    for (std::uint64_t p = 0; p < ensemble.n_paths; ++p) {
        if (ensemble.aborted[p]) continue;
        num.push_back(ensemble.weighted_local_time(p));
        den.push_back(ensemble.local_time(p));
    }
    return jackknife_ratio(num, den);
}

EffectiveRobin effective_robin(const BoundaryAverage& average, double alpha) {
    EffectiveRobin out;
    out.average = average;
    const double v = average.value;
    const double slack = 2.0 * average.std_error;
    out.out_of_range = v < -alpha - slack || v > slack;
    out.reported = std::clamp(v, -alpha, 0.0);
    return out;
}

EffectiveRobin effective_robin(const TorusScalarFn& c, double alpha, const ReflectedPathEnsemble& ensemble) {
    return effective_robin(local_time_average(c, ensemble), alpha);
}

ConditionNReport check_condition_n(const CorrectorSet& correctors, const PeriodicCoefficients& coeffs,
                                   const ReflectedPathEnsemble& ensemble, const ConvexDomain& domain,
                                   int boundary_samples) {
    const int d = coeffs.dim;
    if (correctors.grid.dim() != d || domain.dim() != d) throw PreconditionError("dimension mismatch");
    const TorusGrid& grid = correctors.grid;
    // Nodal (A grad w~)_ij, interpolated to the contact points.
    std::vector<Eigen::VectorXd> fields(static_cast<std::size_t>(d * d), Eigen::VectorXd(grid.size()));
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const Mat ag = coeffs.A(grid.point(k)) * correctors.grad_omega_tilde[k];
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) fields[static_cast<std::size_t>(i * d + j)][static_cast<Eigen::Index>(k)] = ag(i, j);
        }
    }
    ConditionNReport rep;
    rep.matrix = Mat::Zero(d, d);
    rep.matrix_stderr = Mat::Zero(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            const auto& f = fields[static_cast<std::size_t>(i * d + j)];
            const auto avg = local_time_average([&](const Vec& y) { return interpolate_nodal(grid, f.data(), y); },
                                                ensemble);
            rep.matrix(i, j) = avg.value;
            rep.matrix_stderr(i, j) = avg.std_error;
        }
    }
    rep.min_form = std::numeric_limits<double>::infinity();
    const double step = 2.0 * std::numbers::pi / boundary_samples;
    for (int s = 0; s < boundary_samples; ++s) {
        Vec dir = Vec::Zero(d);
        if (d == 1) {
            dir[0] = s % 2 == 0 ? 1.0 : -1.0;
        } else if (d == 2) {
            dir[0] = std::cos(s * step);
            dir[1] = std::sin(s * step);
        } else {
            // Fibonacci sphere.
            const double z = 1.0 - (2.0 * s + 1.0) / boundary_samples;
            const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
            const double phi = s * 2.399963229728653;
            dir << r * std::cos(phi), r * std::sin(phi), z;
        }
        const Vec g = domain.grad_psi(domain.boundary_along_ray(dir));
        const double form = g.dot(rep.matrix * g);
        if (form < rep.min_form) {
            rep.min_form = form;
            const Mat outer = g * g.transpose();
            rep.min_form_stderr = std::sqrt(outer.cwiseProduct(outer).cwiseProduct(rep.matrix_stderr.cwiseProduct(rep.matrix_stderr)).sum());
        }
    }
    return rep;
}

}  // namespace robin_homog
