#include "robin_homog/reference_solver.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <sstream>

namespace robin_homog {

bool is_isotropic(const Mat& a_bar, double tolerance) {
    Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (a_bar + a_bar.transpose()));
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    return lo > 0.0 && (hi - lo) <= tolerance * lo;
}

RadialProblem RadialProblem::isotropic(const Mat& a_bar, double C_bar, double R, double T, int dim) {
    if (!is_isotropic(a_bar)) {
        std::ostringstream msg;
        msg << "oracle inapplicable: effective tensor is not isotropic within 1%";
        throw PreconditionError(msg.str());
    }
    RadialProblem p;
    p.a_bar_scalar = a_bar.trace() / static_cast<double>(a_bar.rows());
    p.C_bar = C_bar;
    p.R = R;
    p.T = T;
    p.dim = dim;
    return p;
}

namespace {

/// Tridiagonal operator rows lo[j] u_{j-1} + mid[j] u_j + up[j] u_{j+1}.
struct Tridiagonal {
    std::vector<double> lo, mid, up;
};

Tridiagonal radial_operator(const RadialProblem& p) {
    const int n = p.nr;
    const double h = p.R / n;
    const double half = 0.5 * p.a_bar_scalar;
    const int d = p.dim;
    Tridiagonal op{std::vector<double>(n + 1, 0.0), std::vector<double>(n + 1, 0.0), std::vector<double>(n + 1, 0.0)};
    // r = 0: the Laplacian of a radial function is d u_rr there; symmetric ghost u_{-1} = u_1.
    op.mid[0] = -2.0 * d * half / (h * h);
    op.up[0] = 2.0 * d * half / (h * h);
    for (int j = 1; j <= n; ++j) {
        const double r = j * h;
        const double a = half / (h * h);
        const double b = half * (d - 1) / (2.0 * h * r);
        op.lo[j] = a - b;
        op.mid[j] = -2.0 * a;
        op.up[j] = a + b;
    }
    // Ghost u_{n+1} = u_{n-1} + 2 h kappa u_n from the Robin condition.
    const double kappa = 2.0 * p.C_bar / p.a_bar_scalar;
    op.lo[n] += op.up[n];
    op.mid[n] += op.up[n] * 2.0 * h * kappa;
    op.up[n] = 0.0;
    return op;
}

std::vector<double> multiply(const Tridiagonal& op, const std::vector<double>& u) {
    const std::size_t n = u.size();
    std::vector<double> out(n);
    for (std::size_t j = 0; j < n; ++j) {
        double v = op.mid[j] * u[j];
        if (j > 0) v += op.lo[j] * u[j - 1];
        if (j + 1 < n) v += op.up[j] * u[j + 1];
        out[j] = v;
    }
    return out;
}

/// Solves (I - s op) x = rhs by the Thomas algorithm.
std::vector<double> solve_shifted(const Tridiagonal& op, double s, const std::vector<double>& rhs) {
    const std::size_t n = rhs.size();
    std::vector<double> c(n), d(n), x(n);
    double beta = 1.0 - s * op.mid[0];
    c[0] = -s * op.up[0] / beta;
    d[0] = rhs[0] / beta;
    for (std::size_t j = 1; j < n; ++j) {
        const double a = -s * op.lo[j];
        beta = (1.0 - s * op.mid[j]) - a * c[j - 1];
        c[j] = j + 1 < n ? -s * op.up[j] / beta : 0.0;
        d[j] = (rhs[j] - a * d[j - 1]) / beta;
    }
    x[n - 1] = d[n - 1];
    for (std::size_t j = n - 1; j-- > 0;) x[j] = d[j] - c[j] * x[j + 1];
    return x;
}

std::vector<double> radial_gradient(const RadialProblem& p, const std::vector<double>& u) {
    const int n = p.nr;
    const double h = p.R / n;
    std::vector<double> g(u.size());
    g[0] = 0.0;
    for (int j = 1; j < n; ++j) g[static_cast<std::size_t>(j)] = (u[static_cast<std::size_t>(j + 1)] - u[static_cast<std::size_t>(j - 1)]) / (2.0 * h);
    g[static_cast<std::size_t>(n)] = 2.0 * p.C_bar / p.a_bar_scalar * u[static_cast<std::size_t>(n)];
    return g;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) m = std::max(m, std::abs(a[j] - b[j]));
    return m;
}

/// Returns false when the fixed-point sweeps stop contracting.
bool march(const RadialProblem& p, int nt, std::vector<double>& u) {
    const auto op = radial_operator(p);
    const double dt = p.T / nt;
    const std::size_t n = static_cast<std::size_t>(p.nr) + 1;
    const double h = p.R / p.nr;
    auto source = [&](const std::vector<double>& v) {
        std::vector<double> s(n, 0.0);
        if (!p.f_bar_radial) return s;
        const auto grad = radial_gradient(p, v);
        for (std::size_t j = 0; j < n; ++j) s[j] = p.f_bar_radial(static_cast<double>(j) * h, v[j], grad[j]);
        return s;
    };
    for (int step = 0; step < nt; ++step) {
        const auto lu = multiply(op, u);
        std::vector<double> base(n);
        for (std::size_t j = 0; j < n; ++j) base[j] = u[j] + 0.5 * dt * lu[j];
        std::vector<double> iterate = u;
        double previous_change = std::numeric_limits<double>::infinity();
        for (int sweep = 0; sweep < 2; ++sweep) {
            std::vector<double> mid(n);
            for (std::size_t j = 0; j < n; ++j) mid[j] = 0.5 * (u[j] + iterate[j]);
            const auto f = source(mid);
            std::vector<double> rhs(n);
            for (std::size_t j = 0; j < n; ++j) rhs[j] = base[j] + dt * f[j];
            auto next = solve_shifted(op, 0.5 * dt, rhs);
            const double change = max_diff(next, iterate);
            if (sweep > 0 && change > previous_change && change > 1e-13) return false;
            previous_change = change;
            iterate = std::move(next);
        }
        u = std::move(iterate);
    }
    return true;
}

}  // namespace

RadialSolution solve_radial(const RadialProblem& problem) {
    if (!(problem.a_bar_scalar > 0.0)) throw PreconditionError("a_bar_scalar must be positive");
    if (problem.C_bar > 0.0) throw PreconditionError("C_bar must be nonpositive");
    if (!(problem.R > 0.0) || !(problem.T > 0.0)) throw PreconditionError("R and T must be positive");
    if (problem.nr < 4 || problem.nt < 1) throw PreconditionError("radial grid too coarse");
    if (problem.dim < 1 || problem.dim > kMaxDim) throw PreconditionError("dimension must be 1..3");
    if (!problem.g_radial) throw PreconditionError("terminal data g is required");
    const std::size_t n = static_cast<std::size_t>(problem.nr) + 1;
    const double h = problem.R / problem.nr;
    std::vector<double> g(n);
    for (std::size_t j = 0; j < n; ++j) g[j] = problem.g_radial(static_cast<double>(j) * h);

    int nt = problem.nt;
    for (int attempt = 0; attempt < 4; ++attempt, nt *= 2) {
        std::vector<double> u = g;
        if (!march(problem, nt, u)) continue;
        RadialSolution sol;
        sol.r.resize(n);
        for (std::size_t j = 0; j < n; ++j) sol.r[j] = static_cast<double>(j) * h;
        sol.u = std::move(u);
        sol.u_center = sol.u[0];
        sol.nt_used = nt;
        return sol;
    }
    throw NumericalError("radial fixed-point iteration does not contract even after three time-step reductions");
}

}  // namespace robin_homog
