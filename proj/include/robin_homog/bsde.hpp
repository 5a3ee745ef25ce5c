#pragma once

#include "robin_homog/coefficients.hpp"
#include "robin_homog/domain.hpp"
#include "robin_homog/reflected_sde.hpp"

#include <string>
#include <vector>

namespace robin_homog {

/// Regression functions of the spatial state, scaled to the domain's bounding box.
class RegressionBasis {
public:
    enum class Kind { Polynomial, Radial };

    /// All monomials of total degree <= degree in the box-scaled coordinates.
    static RegressionBasis polynomial(const ConvexDomain& domain, int degree);
    /// A constant plus Gaussian bumps exp(-|x - c|^2 / (2 width^2)).
    static RegressionBasis radial(const ConvexDomain& domain, std::vector<Vec> centers, double width);
    /// "deg=K", "poly(K)" or "radial(k, width)" with k centers per axis on the bounding box.
    static RegressionBasis parse(const std::string& spec, const ConvexDomain& domain);

    Kind kind() const { return kind_; }
    int dim() const { return dim_; }
    int degree() const { return degree_; }
    int size() const;
    std::string describe() const;

    /// Writes size() values; the first basis function is the constant 1.
    void evaluate(const Vec& x, double* out) const;

    /// Polynomial basis of one lower degree.
    RegressionBasis reduced() const;

private:
    Kind kind_ = Kind::Polynomial;
    int dim_ = 2;
    int degree_ = 2;
    Vec box_center_;
    Vec box_half_width_;
    std::vector<std::vector<int>> exponents_;
    std::vector<Vec> centers_;
    double width_ = 1.0;
};

struct RegressionResult {
    Eigen::MatrixXd coefficients;
    Eigen::MatrixXd fitted;
    double condition = 1.0;
    bool ridge = false;
};

/// Least squares fit of each column of `values` on the design matrix; ridge
/// regularization 1e-10 trace(Phi^T Phi) when cond(Phi) exceeds 1e10.
RegressionResult regress(const Eigen::MatrixXd& design, const Eigen::MatrixXd& values);
RegressionResult regress(const std::vector<Vec>& states, const Eigen::MatrixXd& values, const RegressionBasis& basis);
Eigen::MatrixXd design_matrix(const std::vector<Vec>& states, const RegressionBasis& basis);

/// The Robin term of the backward equation.
struct RobinTerm {
    enum class Kind { None, Recorded, Constant };
    Kind kind = Kind::None;
    double value = 0.0;

    static RobinTerm none() { return {}; }
    /// Use the ensemble's c(X/eps)-weighted local-time channel.
    static RobinTerm recorded() { return {Kind::Recorded, 0.0}; }
    static RobinTerm constant(double c) { return {Kind::Constant, c}; }
};

struct BsdeOptions {
    int threads = 0;
    /// Design matrices with cond above this trigger a degree reduction.
    double rank_condition = 1e12;
    /// Allowed relative excess of max |Y| over the a priori bound.
    double bound_slack = 0.05;
};

struct BsdeSlabDiagnostics {
    double time = 0.0;
    double condition = 1.0;
    double max_abs_y = 0.0;
    int basis_size = 0;
    bool ridge = false;
};

struct BsdeSolution {
    double y0 = 0.0;
    double y0_stderr = 0.0;
    /// Per slab (index k = time k * slab_dt), coefficients of Y_k and of the
    /// martingale-increment regression that yields Z_k. Slab 0 holds the means.
    std::vector<Eigen::MatrixXd> y_coefficients;
    std::vector<Eigen::MatrixXd> z_coefficients;
    std::vector<BsdeSlabDiagnostics> slabs;
    double max_abs_y = 0.0;
    double y_bound = 0.0;
    std::uint64_t paths_used = 0;
    std::vector<std::string> warnings;
};

/// ||g||_inf + T ||f||_inf from the declared driver bounds.
double y_apriori_bound(const Driver& driver, double T);

/// Backward regression scheme for Y = g(X_T) + int f dr + int c Y dK - int <Z, dM>. Each slab regresses the
/// realized discounted payoff from that slab to T, with f evaluated at the fitted Y and Z; the part of f
/// linear in y is integrated exactly over the slab.
BsdeSolution solve_bsde(const ReflectedPathEnsemble& ensemble, const Driver& driver, const RobinTerm& robin,
                        const RegressionBasis& basis, const BsdeOptions& options = {});

}  // namespace robin_homog
