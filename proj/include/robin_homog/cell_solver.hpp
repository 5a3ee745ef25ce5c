#pragma once

#include "robin_homog/coefficients.hpp"
#include "robin_homog/torus_grid.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

namespace robin_homog {

struct CellSolverOptions {
    /// Required RMS residual of the discrete equations after the solve.
    double residual_tol = 1e-8;
    int restart = 40;
    int max_iterations = 4000;
    std::size_t max_nodes = kDefaultGridNodeCap;
};

/// Matrix-free fourth-order conservative discretization of
///   L u  = 1/2 div(A grad u) + b.grad u
///   L* v = 1/2 div(A grad v) - div(b v)
/// on a periodic grid. The adjoint is the exact transpose of the generator.
class CellOperator {
public:
    explicit CellOperator(const GridCoefficients& gc);
    ~CellOperator();
    CellOperator(const CellOperator&) = delete;
    CellOperator& operator=(const CellOperator&) = delete;

    const TorusGrid& grid() const { return grid_; }

    void apply(const Eigen::VectorXd& u, Eigen::VectorXd& out) const;
    void apply_adjoint(const Eigen::VectorXd& v, Eigen::VectorXd& out) const;

    /// Discrete image of the coordinate function x_i under L, i.e. the stencil's b~_i.
    Eigen::VectorXd coordinate_image(int i) const;

    /// Fourth-order centered derivative along `axis` at the nodes.
    Eigen::VectorXd nodal_derivative(const Eigen::VectorXd& u, int axis) const;

    /// Face-centred derivative along `axis`; entry k lives on the face k + 1/2.
    Eigen::VectorXd face_derivative(const Eigen::VectorXd& u, int axis) const;

    /// Face value of a_{axis,l}, entry k on the face k + 1/2 along `axis`.
    const Eigen::VectorXd& face_coefficient(int axis, int l) const {
        return face_a_[static_cast<std::size_t>(axis * grid_.dim() + l)];
    }

    /// Approximate inverse of the constant-coefficient diffusion part; maps onto
    /// mean-zero fields and annihilates constants.
    void precondition(const Eigen::VectorXd& r, Eigen::VectorXd& out) const;

private:
    enum class Stencil { FaceGradient, FaceDivergence, Centered, Interpolate, InterpolateT };
    void stencil(Stencil kind, const Eigen::VectorXd& in, int axis, Eigen::VectorXd& out) const;

    TorusGrid grid_;
    std::vector<Eigen::VectorXd> face_a_;
    std::vector<bool> cross_active_;
    std::vector<Eigen::VectorXd> b_;
    /// neighbours_[axis * 5 + (offset + 2)][node] for offsets -2..2.
    std::vector<std::vector<std::uint32_t>> neighbours_;
    struct Fft;
    std::unique_ptr<Fft> fft_;
};

/// Grid tabulation plus discrete operator for one coefficient set at resolution n.
class CellProblem {
public:
    CellProblem(const PeriodicCoefficients& coeffs, int n, CellSolverOptions options = {});

    const GridCoefficients& coefficients() const { return gc_; }
    const CellOperator& op() const { return *op_; }
    const TorusGrid& grid() const { return gc_.grid; }
    const CellSolverOptions& options() const { return options_; }

private:
    GridCoefficients gc_;
    std::unique_ptr<CellOperator> op_;
    CellSolverOptions options_;
};

/// Root-mean-square norm over the grid nodes.
double grid_norm(const Eigen::VectorXd& v);

struct MeasureSolveInfo {
    double residual = 0.0;
    int iterations = 0;
};

/// Unit-mean positive solution of L* m = 0.
TorusField solve_invariant_measure(const CellProblem& problem, MeasureSolveInfo* info = nullptr);
TorusField solve_invariant_measure(const PeriodicCoefficients& coeffs, int n, const CellSolverOptions& options = {});

/// Component i: -1/2 sum_j int a_ij d_j m + int b_i m by grid quadrature.
Vec centering_residual(const CellProblem& problem, const TorusField& m);

struct CorrectorSet {
    TorusGrid grid;
    std::vector<TorusField> omega;
    std::vector<TorusVectorField> grad_omega;
    /// Column i is e_i + grad omega_i at each node.
    std::vector<Mat> grad_omega_tilde;
    std::vector<double> final_residuals;
};

/// Periodic solutions of L omega_i = -b~_i normalized by int omega_i m = 0.
CorrectorSet solve_correctors(const CellProblem& problem, const TorusField& m);

/// Nodewise a^_ij = <A grad w~_i, grad w~_j>.
std::vector<Mat> corrector_energy_density(const CellProblem& problem, const CorrectorSet& correctors);

/// m-weighted quadrature of the corrector energy density, symmetrized.
Mat effective_diffusion(const CellProblem& problem, const CorrectorSet& correctors, const TorusField& m);

/// Harmonic-type lower and m-weighted arithmetic upper bounds on the effective tensor.
struct VoigtReussBounds {
    Mat lower;
    Mat upper;
};
VoigtReussBounds voigt_reuss_bounds(const CellProblem& problem, const TorusField& m);

using Nonlinearity = std::function<double(const Vec& x, double y, const Vec& z)>;

/// f-bar(x, y, z) = sum over nodes of f(x, y, grad w~(eta) z) m(eta) / n^d.
/// Nodes sharing the same corrector matrix are merged; if more than `max_nodes`
/// distinct matrices remain the grid is subsampled with a uniform stride.
Nonlinearity effective_nonlinearity(const Nonlinearity& f, const CorrectorSet& correctors, const TorusField& m,
                                    std::size_t max_nodes = 4096);

/// ||e_i + grad omega_i||_{L^p} for each i, Lebesgue or m-weighted.
std::vector<double> corrector_gradient_lp(const CorrectorSet& correctors, double p, const TorusField* m_weight = nullptr);

struct EffectiveModel {
    Mat a_bar;
    /// Filled by the boundary-measure estimate; stays NaN until then.
    double C_bar = std::numeric_limits<double>::quiet_NaN();
    double C_bar_stderr = std::numeric_limits<double>::quiet_NaN();
    Nonlinearity f_bar;
    TorusGrid grid;
    std::vector<Mat> a_hat;
};

}  // namespace robin_homog
