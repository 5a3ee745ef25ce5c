#include "robin_homog/cell_solver.hpp"

#include "gmres.hpp"

#include <Eigen/Eigenvalues>
#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <map>
#include <numbers>
#include <sstream>

namespace robin_homog {

using Eigen::VectorXd;

struct CellOperator::Fft {
    std::vector<int> dims;
    std::size_t real_size = 0;
    std::size_t complex_size = 0;
    double* real = nullptr;
    fftw_complex* spectrum = nullptr;
    fftw_plan forward = nullptr;
    fftw_plan backward = nullptr;
    std::vector<double> inverse_symbol;

    ~Fft() {
        if (forward) fftw_destroy_plan(forward);
        if (backward) fftw_destroy_plan(backward);
        if (real) fftw_free(real);
        if (spectrum) fftw_free(spectrum);
    }
};

namespace {

/// Eigenvalue of the one-dimensional face-divergence of the face-gradient at angle theta.
double diffusion_symbol(double theta, double h) {
    const double s = (27.0 * std::sin(0.5 * theta) - std::sin(1.5 * theta)) / (12.0 * h);
    return -s * s;
}

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

CellOperator::CellOperator(const GridCoefficients& gc) : grid_(gc.grid), fft_(std::make_unique<Fft>()) {
    const int d = grid_.dim();
    const std::size_t size = grid_.size();
    if (size > std::numeric_limits<std::uint32_t>::max()) throw PreconditionError("cell grid too large");

    neighbours_.assign(static_cast<std::size_t>(d) * 5, std::vector<std::uint32_t>(size));
    for (int axis = 0; axis < d; ++axis) {
        for (int off = -2; off <= 2; ++off) {
            auto& table = neighbours_[static_cast<std::size_t>(axis * 5 + off + 2)];
            for (std::size_t k = 0; k < size; ++k) table[k] = static_cast<std::uint32_t>(grid_.shifted(k, axis, off));
        }
    }

    face_a_.assign(static_cast<std::size_t>(d * d), VectorXd());
    cross_active_.assign(static_cast<std::size_t>(d * d), false);
    for (int j = 0; j < d; ++j) {
        for (int l = 0; l < d; ++l) {
            VectorXd nodal(static_cast<Eigen::Index>(size));
            for (std::size_t k = 0; k < size; ++k) nodal[static_cast<Eigen::Index>(k)] = gc.A[k](j, l);
            VectorXd face;
            stencil(Stencil::Interpolate, nodal, j, face);
            cross_active_[static_cast<std::size_t>(j * d + l)] = j != l && nodal.cwiseAbs().maxCoeff() > 0.0;
            face_a_[static_cast<std::size_t>(j * d + l)] = std::move(face);
        }
    }
    b_.assign(static_cast<std::size_t>(d), VectorXd(static_cast<Eigen::Index>(size)));
    for (int l = 0; l < d; ++l) {
        for (std::size_t k = 0; k < size; ++k) b_[static_cast<std::size_t>(l)][static_cast<Eigen::Index>(k)] = gc.b[k][l];
    }

    auto& f = *fft_;
    const int n = grid_.n();
    f.dims.assign(static_cast<std::size_t>(d), n);
    f.real_size = size;
    f.complex_size = size / static_cast<std::size_t>(n) * static_cast<std::size_t>(n / 2 + 1);
    f.real = fftw_alloc_real(f.real_size);
    f.spectrum = fftw_alloc_complex(f.complex_size);
    f.forward = fftw_plan_dft_r2c(d, f.dims.data(), f.real, f.spectrum, FFTW_ESTIMATE);
    f.backward = fftw_plan_dft_c2r(d, f.dims.data(), f.spectrum, f.real, FFTW_ESTIMATE);

    std::vector<double> axis_scale(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) axis_scale[static_cast<std::size_t>(j)] = 0.5 * face_coefficient(j, j).mean();
    const double h = grid_.spacing();
    const int half = n / 2 + 1;
    f.inverse_symbol.assign(f.complex_size, 0.0);
    for (std::size_t c = 0; c < f.complex_size; ++c) {
        // Row-major complex layout: last axis runs over n/2+1 entries.
        std::size_t rest = c;
        double sym = 0.0;
        for (int j = d - 1; j >= 0; --j) {
            const int extent = j == d - 1 ? half : n;
            const int k = static_cast<int>(rest % static_cast<std::size_t>(extent));
            rest /= static_cast<std::size_t>(extent);
            const double theta = 2.0 * std::numbers::pi * k / n;
            sym += axis_scale[static_cast<std::size_t>(j)] * diffusion_symbol(theta, h);
        }
        f.inverse_symbol[c] = sym != 0.0 ? 1.0 / (sym * static_cast<double>(size)) : 0.0;
    }
}

CellOperator::~CellOperator() = default;

void CellOperator::stencil(Stencil kind, const VectorXd& in, int axis, VectorXd& out) const {
    const std::size_t size = grid_.size();
    out.resize(static_cast<Eigen::Index>(size));
    const auto& m2 = neighbours_[static_cast<std::size_t>(axis * 5 + 0)];
    const auto& m1 = neighbours_[static_cast<std::size_t>(axis * 5 + 1)];
    const auto& p1 = neighbours_[static_cast<std::size_t>(axis * 5 + 3)];
    const auto& p2 = neighbours_[static_cast<std::size_t>(axis * 5 + 4)];
    const double h = grid_.spacing();
    const double* u = in.data();
    double* o = out.data();
    switch (kind) {
        case Stencil::FaceGradient: {
            const double s = 1.0 / (24.0 * h);
            for (std::size_t k = 0; k < size; ++k) o[k] = s * (-u[p2[k]] + 27.0 * u[p1[k]] - 27.0 * u[k] + u[m1[k]]);
            break;
        }
        case Stencil::FaceDivergence: {
            const double s = 1.0 / (24.0 * h);
            for (std::size_t k = 0; k < size; ++k) o[k] = s * (-u[p1[k]] + 27.0 * u[k] - 27.0 * u[m1[k]] + u[m2[k]]);
            break;
        }
        case Stencil::Centered: {
            const double s = 1.0 / (12.0 * h);
            for (std::size_t k = 0; k < size; ++k) o[k] = s * (-u[p2[k]] + 8.0 * u[p1[k]] - 8.0 * u[m1[k]] + u[m2[k]]);
            break;
        }
        case Stencil::Interpolate: {
            for (std::size_t k = 0; k < size; ++k) o[k] = (-u[m1[k]] + 9.0 * u[k] + 9.0 * u[p1[k]] - u[p2[k]]) / 16.0;
            break;
        }
        case Stencil::InterpolateT: {
            for (std::size_t k = 0; k < size; ++k) o[k] = (-u[p1[k]] + 9.0 * u[k] + 9.0 * u[m1[k]] - u[m2[k]]) / 16.0;
            break;
        }
    }
}

void CellOperator::apply(const VectorXd& u, VectorXd& out) const {
    const int d = grid_.dim();
    out.setZero(u.size());
    VectorXd flux, tmp, tmp2;
    for (int j = 0; j < d; ++j) {
        stencil(Stencil::FaceGradient, u, j, tmp);
        flux = face_coefficient(j, j).cwiseProduct(tmp);
        for (int l = 0; l < d; ++l) {
            if (!cross_active_[static_cast<std::size_t>(j * d + l)]) continue;
            stencil(Stencil::Centered, u, l, tmp);
            stencil(Stencil::Interpolate, tmp, j, tmp2);
            flux += face_coefficient(j, l).cwiseProduct(tmp2);
        }
        stencil(Stencil::FaceDivergence, flux, j, tmp);
        out += 0.5 * tmp;
    }
    for (int l = 0; l < d; ++l) {
        stencil(Stencil::Centered, u, l, tmp);
        out += b_[static_cast<std::size_t>(l)].cwiseProduct(tmp);
    }
}

void CellOperator::apply_adjoint(const VectorXd& v, VectorXd& out) const {
    const int d = grid_.dim();
    out.setZero(v.size());
    VectorXd grad, flux, tmp, tmp2;
    for (int j = 0; j < d; ++j) {
        stencil(Stencil::FaceGradient, v, j, grad);
        flux = face_coefficient(j, j).cwiseProduct(grad);
        stencil(Stencil::FaceDivergence, flux, j, tmp);
        out += 0.5 * tmp;
        for (int l = 0; l < d; ++l) {
            if (!cross_active_[static_cast<std::size_t>(j * d + l)]) continue;
            flux = face_coefficient(j, l).cwiseProduct(grad);
            stencil(Stencil::InterpolateT, flux, j, tmp);
            stencil(Stencil::Centered, tmp, l, tmp2);
            out += 0.5 * tmp2;
        }
    }
    for (int l = 0; l < d; ++l) {
        tmp = b_[static_cast<std::size_t>(l)].cwiseProduct(v);
        stencil(Stencil::Centered, tmp, l, tmp2);
        out -= tmp2;
    }
}

VectorXd CellOperator::coordinate_image(int i) const {
    const int d = grid_.dim();
    VectorXd out = b_[static_cast<std::size_t>(i)];
    VectorXd tmp;
    for (int j = 0; j < d; ++j) {
        if (j != i && !cross_active_[static_cast<std::size_t>(j * d + i)]) continue;
        stencil(Stencil::FaceDivergence, face_coefficient(j, i), j, tmp);
        out += 0.5 * tmp;
    }
    return out;
}

VectorXd CellOperator::nodal_derivative(const VectorXd& u, int axis) const {
    VectorXd out;
    stencil(Stencil::Centered, u, axis, out);
    return out;
}

VectorXd CellOperator::face_derivative(const VectorXd& u, int axis) const {
    VectorXd out;
    stencil(Stencil::FaceGradient, u, axis, out);
    return out;
}

void CellOperator::precondition(const VectorXd& r, VectorXd& out) const {
    auto& f = *fft_;
    std::memcpy(f.real, r.data(), f.real_size * sizeof(double));
    fftw_execute(f.forward);
    for (std::size_t c = 0; c < f.complex_size; ++c) {
        f.spectrum[c][0] *= f.inverse_symbol[c];
        f.spectrum[c][1] *= f.inverse_symbol[c];
    }
    fftw_execute(f.backward);
    out.resize(r.size());
    std::memcpy(out.data(), f.real, f.real_size * sizeof(double));
}

CellProblem::CellProblem(const PeriodicCoefficients& coeffs, int n, CellSolverOptions options)
    : options_(options) {
    if (!is_power_of_two(n) || n < 16 || n > 1024) {
        throw PreconditionError("cell grid resolution must be a power of 2 in [16, 1024], got " + std::to_string(n));
    }
    gc_ = sample_on_grid(coeffs, n, options.max_nodes);
    op_ = std::make_unique<CellOperator>(gc_);
}

double grid_norm(const VectorXd& v) {
    return v.size() == 0 ? 0.0 : std::sqrt(v.squaredNorm() / static_cast<double>(v.size()));
}

namespace {

double euclidean_tol(const CellProblem& problem) {
    return 0.1 * problem.options().residual_tol * std::sqrt(static_cast<double>(problem.grid().size()));
}

void require_same_grid(const CellProblem& problem, const TorusGrid& grid, const char* what) {
    if (problem.grid() != grid) {
        std::ostringstream msg;
        msg << what << " lives on a " << grid.n() << "^" << grid.dim() << " grid but the cell problem uses "
            << problem.grid().n() << "^" << problem.grid().dim();
        throw PreconditionError(msg.str());
    }
}

}  // namespace

TorusField solve_invariant_measure(const CellProblem& problem, MeasureSolveInfo* info) {
    const auto& op = problem.op();
    const auto size = static_cast<Eigen::Index>(problem.grid().size());
    const VectorXd ones = VectorXd::Ones(size);
    VectorXd rhs;
    op.apply_adjoint(ones, rhs);
    rhs = -rhs;
    VectorXd y = VectorXd::Zero(size);
    const auto& opts = problem.options();
    const auto result = detail::gmres([&](const VectorXd& in, VectorXd& out) { op.apply_adjoint(in, out); },
                                      [&](const VectorXd& in, VectorXd& out) { op.precondition(in, out); }, rhs, y,
                                      euclidean_tol(problem), opts.restart, opts.max_iterations);
    VectorXd m = ones + y;
    m /= m.mean();
    VectorXd res;
    op.apply_adjoint(m, res);
    const double residual = grid_norm(res);
    if (info) {
        info->residual = residual;
        info->iterations = result.iterations;
    }
    if (!(residual <= opts.residual_tol)) {
        std::ostringstream msg;
        msg << "invariant measure solve did not converge: residual " << residual << " after " << result.iterations
            << " iterations";
        throw NumericalError(msg.str());
    }
    if (m.minCoeff() < -1e-8) throw NumericalError("measure positivity violated, refine grid");
    return TorusField(problem.grid(), std::move(m));
}

TorusField solve_invariant_measure(const PeriodicCoefficients& coeffs, int n, const CellSolverOptions& options) {
    const CellProblem problem(coeffs, n, options);
    return solve_invariant_measure(problem);
}

Vec centering_residual(const CellProblem& problem, const TorusField& m) {
    require_same_grid(problem, m.grid, "invariant measure");
    const int d = problem.grid().dim();
    Vec out(d);
    for (int i = 0; i < d; ++i) {
        out[i] = problem.op().coordinate_image(i).dot(m.values) / static_cast<double>(m.values.size());
    }
    return out;
}

CorrectorSet solve_correctors(const CellProblem& problem, const TorusField& m) {
    require_same_grid(problem, m.grid, "invariant measure");
    const auto& op = problem.op();
    const auto& opts = problem.options();
    const int d = problem.grid().dim();
    const auto size = static_cast<Eigen::Index>(problem.grid().size());
    const double mass = m.values.sum();

    CorrectorSet out;
    out.grid = problem.grid();
    for (int i = 0; i < d; ++i) {
        VectorXd rhs = -op.coordinate_image(i);
        const double kernel_part = rhs.dot(m.values) / mass;
        if (std::abs(kernel_part) > 1e-6) {
            std::ostringstream msg;
            msg << "centering failure: corrector right-hand side " << i + 1
                << " is not orthogonal to the invariant measure (component " << kernel_part << ")";
            throw PreconditionError(msg.str());
        }
        rhs.array() -= kernel_part;
        VectorXd y = VectorXd::Zero(size);
        const auto result = detail::gmres([&](const VectorXd& in, VectorXd& o) { op.apply(in, o); },
                                          [&](const VectorXd& in, VectorXd& o) { op.precondition(in, o); }, rhs, y,
                                          euclidean_tol(problem), opts.restart, opts.max_iterations);
        VectorXd omega = y;
        omega.array() -= omega.dot(m.values) / mass;
        VectorXd res;
        op.apply(omega, res);
        const double residual = grid_norm(res - rhs);
        if (!(residual <= opts.residual_tol)) {
            std::ostringstream msg;
            msg << "corrector " << i + 1 << " solve did not converge: residual " << residual << " after "
                << result.iterations << " iterations";
            throw NumericalError(msg.str());
        }
        TorusVectorField grad;
        grad.grid = problem.grid();
        for (int l = 0; l < d; ++l) grad.components.push_back(op.nodal_derivative(omega, l));
        out.omega.emplace_back(problem.grid(), std::move(omega));
        out.grad_omega.push_back(std::move(grad));
        out.final_residuals.push_back(residual);
    }
    out.grad_omega_tilde.assign(problem.grid().size(), Mat::Identity(d, d));
    for (std::size_t k = 0; k < problem.grid().size(); ++k) {
        for (int i = 0; i < d; ++i) {
            for (int l = 0; l < d; ++l) {
                out.grad_omega_tilde[k](l, i) +=
                    out.grad_omega[static_cast<std::size_t>(i)].components[static_cast<std::size_t>(l)]
                                  [static_cast<Eigen::Index>(k)];
            }
        }
    }
    return out;
}

std::vector<Mat> corrector_energy_density(const CellProblem& problem, const CorrectorSet& correctors) {
    require_same_grid(problem, correctors.grid, "corrector set");
    const auto& gc = problem.coefficients();
    std::vector<Mat> out(gc.grid.size());
    for (std::size_t k = 0; k < gc.grid.size(); ++k) {
        const Mat& g = correctors.grad_omega_tilde[k];
        out[k] = g.transpose() * gc.A[k] * g;
    }
    return out;
}

Mat effective_diffusion(const CellProblem& problem, const CorrectorSet& correctors, const TorusField& m) {
    require_same_grid(problem, m.grid, "invariant measure");
    const auto density = corrector_energy_density(problem, correctors);
    const int d = problem.grid().dim();
    Mat acc = Mat::Zero(d, d);
    for (std::size_t k = 0; k < density.size(); ++k) acc += density[k] * m.values[static_cast<Eigen::Index>(k)];
    acc /= static_cast<double>(density.size());
    const double asym = (acc - acc.transpose()).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, acc.cwiseAbs().maxCoeff());
    if (asym > 1e-10 * scale) {
        std::ostringstream msg;
        msg << "effective diffusion asymmetry " << asym << " exceeds 1e-10";
        throw NumericalError(msg.str());
    }
    Mat a_bar = 0.5 * (acc + acc.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> eig(a_bar);
    if (!(eig.eigenvalues().minCoeff() > 0.0)) {
        throw NumericalError("effective diffusion is not positive definite; corrector and measure are inconsistent");
    }
    return a_bar;
}

VoigtReussBounds voigt_reuss_bounds(const CellProblem& problem, const TorusField& m) {
    require_same_grid(problem, m.grid, "invariant measure");
    const auto& gc = problem.coefficients();
    const int d = gc.grid.dim();
    Mat inv_mean = Mat::Zero(d, d);
    Mat mean = Mat::Zero(d, d);
    for (std::size_t k = 0; k < gc.grid.size(); ++k) {
        inv_mean += gc.A[k].inverse();
        mean += gc.A[k] * m.values[static_cast<Eigen::Index>(k)];
    }
    const double n = static_cast<double>(gc.grid.size());
    return {(inv_mean / n).inverse(), mean / n};
}

Nonlinearity effective_nonlinearity(const Nonlinearity& f, const CorrectorSet& correctors, const TorusField& m,
                                    std::size_t max_nodes) {
    if (correctors.grid != m.grid) throw PreconditionError("corrector set and invariant measure grids differ");
    const std::size_t size = correctors.grad_omega_tilde.size();
    const int d = correctors.grid.dim();

    auto collect = [&](std::size_t stride) {
        std::map<std::vector<double>, double> merged;
        double total = 0.0;
        for (std::size_t k = 0; k < size; ++k) {
            if (stride > 1) {
                const auto idx = correctors.grid.multi_index(k);
                bool keep = true;
                for (int a = 0; a < d; ++a) keep = keep && idx[a] % static_cast<int>(stride) == 0;
                if (!keep) continue;
            }
            const Mat& g = correctors.grad_omega_tilde[k];
            std::vector<double> key(g.data(), g.data() + g.size());
            const double w = m.values[static_cast<Eigen::Index>(k)];
            merged[key] += w;
            total += w;
        }
        return std::make_pair(std::move(merged), total);
    };

    std::size_t stride = 1;
    auto [merged, total] = collect(stride);
    while (merged.size() > max_nodes && stride < static_cast<std::size_t>(correctors.grid.n())) {
        stride *= 2;
        std::tie(merged, total) = collect(stride);
    }
    std::vector<Mat> mats;
    std::vector<double> weights;
    mats.reserve(merged.size());
    for (const auto& [key, w] : merged) {
        Mat g(d, d);
        std::copy(key.begin(), key.end(), g.data());
        mats.push_back(g);
        weights.push_back(w / total);
    }
    return [f, mats = std::move(mats), weights = std::move(weights)](const Vec& x, double y, const Vec& z) {
        double acc = 0.0;
        for (std::size_t q = 0; q < mats.size(); ++q) acc += weights[q] * f(x, y, mats[q] * z);
        return acc;
    };
}

std::vector<double> corrector_gradient_lp(const CorrectorSet& correctors, double p, const TorusField* m_weight) {
    if (!(p >= 1.0 && p <= 16.0)) throw PreconditionError("Lp exponent must lie in [1, 16]");
    if (m_weight && m_weight->grid != correctors.grid) throw PreconditionError("weight grid differs from correctors");
    const int d = correctors.grid.dim();
    const std::size_t size = correctors.grad_omega_tilde.size();
    std::vector<double> out(static_cast<std::size_t>(d), 0.0);
    for (int i = 0; i < d; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < size; ++k) {
            const double norm = correctors.grad_omega_tilde[k].col(i).norm();
            const double w = m_weight ? m_weight->values[static_cast<Eigen::Index>(k)] : 1.0;
            acc += w * std::pow(norm, p);
        }
        out[static_cast<std::size_t>(i)] = std::pow(acc / static_cast<double>(size), 1.0 / p);
    }
    return out;
}

}  // namespace robin_homog
