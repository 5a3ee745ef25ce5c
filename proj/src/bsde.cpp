#include "robin_homog/bsde.hpp"

#include "parallel.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <functional>
#include <regex>
#include <sstream>

namespace robin_homog {

namespace {

void total_degree_exponents(int dim, int degree, std::vector<std::vector<int>>& out) {
    for (int total = 0; total <= degree; ++total) {
        std::vector<int> e(static_cast<std::size_t>(dim), 0);
        // Enumerate compositions of `total` into dim parts, lexicographically descending.
        std::function<void(int, int)> rec = [&](int axis, int left) {
            if (axis == dim - 1) {
                e[static_cast<std::size_t>(axis)] = left;
                out.push_back(e);
                return;
            }
            for (int k = left; k >= 0; --k) {
                e[static_cast<std::size_t>(axis)] = k;
                rec(axis + 1, left - k);
            }
        };
        rec(0, total);
    }
}

void box_of(const ConvexDomain& domain, Vec& center, Vec& half) {
    const int d = domain.dim();
    center = domain.center();
    half = Vec::Constant(d, domain.bounding_radius());
    if (domain.kind() != DomainKind::Generic) half = domain.semi_axes();
}

}  // namespace

RegressionBasis RegressionBasis::polynomial(const ConvexDomain& domain, int degree) {
    if (degree < 0) throw PreconditionError("polynomial degree must be nonnegative");
    RegressionBasis b;
    b.kind_ = Kind::Polynomial;
    b.dim_ = domain.dim();
    b.degree_ = degree;
    box_of(domain, b.box_center_, b.box_half_width_);
    total_degree_exponents(b.dim_, degree, b.exponents_);
    return b;
}

RegressionBasis RegressionBasis::radial(const ConvexDomain& domain, std::vector<Vec> centers, double width) {
    if (!(width > 0.0)) throw PreconditionError("radial basis width must be positive");
    RegressionBasis b;
    b.kind_ = Kind::Radial;
    b.dim_ = domain.dim();
    b.degree_ = 0;
    box_of(domain, b.box_center_, b.box_half_width_);
    b.centers_ = std::move(centers);
    b.width_ = width;
    return b;
}

RegressionBasis RegressionBasis::parse(const std::string& spec, const ConvexDomain& domain) {
    std::smatch m;
    static const std::regex deg(R"(\s*(?:deg\s*=\s*|poly\s*\(\s*)(\d+)\s*\)?\s*)");
    static const std::regex rad(R"(\s*radial\s*\(\s*(\d+)\s*,\s*([0-9.eE+-]+)\s*\)\s*)");
    if (std::regex_match(spec, m, deg)) return polynomial(domain, std::stoi(m[1]));
    if (std::regex_match(spec, m, rad)) {
        const int k = std::stoi(m[1]);
        const double w = std::stod(m[2]);
        if (k < 1) throw PreconditionError("radial basis needs at least one center per axis");
        Vec c;
        Vec h;
        box_of(domain, c, h);
        const int d = domain.dim();
        std::vector<Vec> centers;
        std::vector<int> idx(static_cast<std::size_t>(d), 0);
        while (true) {
            Vec p(d);
            for (int a = 0; a < d; ++a) {
                const double frac = k == 1 ? 0.0 : -1.0 + 2.0 * idx[static_cast<std::size_t>(a)] / (k - 1);
                p[a] = c[a] + frac * h[a];
            }
            centers.push_back(p);
            int a = 0;
            while (a < d && ++idx[static_cast<std::size_t>(a)] == k) idx[static_cast<std::size_t>(a++)] = 0;
            if (a == d) break;
        }
        return radial(domain, std::move(centers), w);
    }
    throw PreconditionError("unrecognized basis spec '" + spec + "' (expected deg=K, poly(K) or radial(k,w))");
}

int RegressionBasis::size() const {
    return kind_ == Kind::Polynomial ? static_cast<int>(exponents_.size()) : 1 + static_cast<int>(centers_.size());
}

std::string RegressionBasis::describe() const {
    std::ostringstream os;
    if (kind_ == Kind::Polynomial)
        os << "poly(" << degree_ << ")";
    else
        os << "radial(" << centers_.size() << " centers, w=" << width_ << ")";
    return os.str();
}

void RegressionBasis::evaluate(const Vec& x, double* out) const {
    if (kind_ == Kind::Polynomial) {
        double u[kMaxDim];
        for (int a = 0; a < dim_; ++a) u[a] = (x[a] - box_center_[a]) / box_half_width_[a];
        for (std::size_t j = 0; j < exponents_.size(); ++j) {
            double v = 1.0;
            for (int a = 0; a < dim_; ++a) {
                for (int p = 0; p < exponents_[j][static_cast<std::size_t>(a)]; ++p) v *= u[a];
            }
            out[j] = v;
        }
        return;
    }
    out[0] = 1.0;
    const double inv = 1.0 / (2.0 * width_ * width_);
    for (std::size_t j = 0; j < centers_.size(); ++j) out[j + 1] = std::exp(-(x - centers_[j]).squaredNorm() * inv);
}

RegressionBasis RegressionBasis::reduced() const {
    if (kind_ != Kind::Polynomial || degree_ == 0) return *this;
    RegressionBasis b = *this;
    b.degree_ = degree_ - 1;
    b.exponents_.clear();
    total_degree_exponents(dim_, b.degree_, b.exponents_);
    return b;
}

Eigen::MatrixXd design_matrix(const std::vector<Vec>& states, const RegressionBasis& basis) {
    const auto n = static_cast<Eigen::Index>(states.size());
    const int p = basis.size();
    // Row-major scratch so each evaluation writes a contiguous row.
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> phi(n, p);
    for (Eigen::Index i = 0; i < n; ++i) basis.evaluate(states[static_cast<std::size_t>(i)], phi.row(i).data());
    return phi;
}

RegressionResult regress(const Eigen::MatrixXd& design, const Eigen::MatrixXd& values) {
    const auto n = design.rows();
    const auto p = design.cols();
    if (values.rows() != n) throw PreconditionError("regression values and design differ in length");
    if (n < p) throw PreconditionError("regression has fewer paths than unknowns");
    RegressionResult out;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(design);
    const Eigen::MatrixXd r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(r);
    const auto& sv = svd.singularValues();
    const double smax = sv.size() ? sv[0] : 0.0;
    const double smin = sv.size() ? sv[sv.size() - 1] : 0.0;
    out.condition = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
    if (out.condition > 1e10) {
        out.ridge = true;
        const Eigen::MatrixXd gram = design.transpose() * design;
        const double lambda = 1e-10 * gram.trace();
        const Eigen::MatrixXd reg = gram + lambda * Eigen::MatrixXd::Identity(p, p);
        out.coefficients = reg.ldlt().solve(design.transpose() * values);
    } else {
        out.coefficients = qr.solve(values);
    }
    out.fitted = design * out.coefficients;
    // A constant regressand is reproduced exactly when the first column is the constant function.
    const bool has_constant = p > 0 && (design.col(0).array() == 1.0).all();
    if (has_constant) {
        for (Eigen::Index c = 0; c < values.cols(); ++c) {
            const double v = values(0, c);
            if ((values.col(c).array() == v).all()) {
                out.coefficients.col(c).setZero();
                out.coefficients(0, c) = v;
                out.fitted.col(c).setConstant(v);
            }
        }
    }
    return out;
}

RegressionResult regress(const std::vector<Vec>& states, const Eigen::MatrixXd& values, const RegressionBasis& basis) {
    return regress(design_matrix(states, basis), values);
}

double y_apriori_bound(const Driver& driver, double T) { return driver.g_sup + T * driver.f_sup; }

BsdeSolution solve_bsde(const ReflectedPathEnsemble& ensemble, const Driver& driver, const RobinTerm& robin,
                        const RegressionBasis& basis, const BsdeOptions& options) {
    if (basis.dim() != ensemble.dim) throw PreconditionError("basis and ensemble dimensions differ");
    if (!driver.f || !driver.g) throw PreconditionError("driver needs both f and g");
    const double delta = ensemble.slab_dt();
    if (!(delta * std::abs(driver.c1_bound) < 0.5)) {
        throw PreconditionError("explicit backward scheme unstable: slab dt * |c1| must be below 0.5");
    }
    if (robin.kind == RobinTerm::Kind::Constant && robin.value > 0.0) {
        throw PreconditionError("constant Robin coefficient must be nonpositive");
    }
    const int d = ensemble.dim;
    std::vector<std::uint64_t> active;
    for (std::uint64_t p = 0; p < ensemble.n_paths; ++p) {
        if (!ensemble.aborted[p]) active.push_back(p);
    }
    const auto n = static_cast<Eigen::Index>(active.size());
    if (n < 2) throw PreconditionError("backward solve needs at least two completed paths");

    BsdeSolution sol;
    sol.paths_used = active.size();
    sol.y_bound = y_apriori_bound(driver, ensemble.T);
    const std::uint64_t slabs = ensemble.slabs();
    sol.y_coefficients.resize(slabs);
    sol.z_coefficients.resize(slabs);
    sol.slabs.resize(slabs);
    if (ensemble.aborted_count() > 0) {
        std::ostringstream msg;
        msg << ensemble.aborted_count() << " aborted paths excluded";
        sol.warnings.push_back(msg.str());
    }
    if (n < 10 * basis.size()) {
        std::ostringstream msg;
        msg << "only " << n << " paths for " << basis.size() << " basis functions";
        sol.warnings.push_back(msg.str());
    }

    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = driver.g(ensemble.state(active[static_cast<std::size_t>(i)], slabs));
    // Realized discounted payoff along each path; Y is its regression on the current state.
    Eigen::VectorXd carried = y;
    const int threads = resolve_thread_count(options.threads);

    RegressionBasis current = basis;
    std::vector<Vec> states(static_cast<std::size_t>(n));
    Eigen::VectorXd target(n);
    Eigen::MatrixXd mart(n, d);
    for (std::uint64_t kk = slabs; kk-- > 0;) {
        for (Eigen::Index i = 0; i < n; ++i) states[static_cast<std::size_t>(i)] = ensemble.state(active[static_cast<std::size_t>(i)], kk);
        for (Eigen::Index i = 0; i < n; ++i) {
            mart.row(i) = ensemble.martingale_increment(active[static_cast<std::size_t>(i)], kk).transpose();
        }
        auto& diag = sol.slabs[kk];
        diag.time = ensemble.time(kk);

        Eigen::VectorXd y_hat(n);
        Eigen::MatrixXd f_proj(n, d);
        if (kk == 0) {
            // Every path starts at x0, so conditional expectations are plain means.
            y_hat.setConstant(y.mean());
            const Eigen::RowVectorXd fm = (mart.array().colwise() * (y - y_hat).array()).colwise().mean() / delta;
            f_proj = fm.replicate(n, 1);
            sol.z_coefficients[kk] = fm.transpose();
            diag.basis_size = 1;
        } else {
            Eigen::MatrixXd phi = design_matrix(states, current);
            auto fit = regress(phi, y);
            while (fit.condition > options.rank_condition && current.kind() == RegressionBasis::Kind::Polynomial &&
                   current.degree() > 0) {
                std::ostringstream msg;
                msg << "slab " << kk << ": design condition " << fit.condition << ", basis reduced to degree "
                    << current.degree() - 1;
                sol.warnings.push_back(msg.str());
                current = current.reduced();
                phi = design_matrix(states, current);
                fit = regress(phi, y);
            }
            y_hat = fit.fitted.col(0);
            const Eigen::MatrixXd weighted = mart.array().colwise() * (y - y_hat).array();
            const auto zfit = regress(phi, weighted);
            f_proj = zfit.fitted / delta;
            sol.z_coefficients[kk] = zfit.coefficients / delta;
            diag.condition = fit.condition;
            diag.ridge = fit.ridge;
            diag.basis_size = current.size();
        }

        detail::parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
            const auto ii = static_cast<Eigen::Index>(i);
            const std::uint64_t p = active[i];
            const Mat a_inv = ensemble.inverse_diffusion_time(p, kk) / delta;
            const Vec z = a_inv * f_proj.row(ii).transpose();
            double discount = 1.0;
            switch (robin.kind) {
                case RobinTerm::Kind::None:
                    break;
                case RobinTerm::Kind::Recorded:
                    discount = std::exp(ensemble.weighted_local_time_increment(p, kk));
                    break;
                case RobinTerm::Kind::Constant:
                    discount = std::exp(robin.value * ensemble.local_time_increment(p, kk));
                    break;
            }
            const double f0 = driver.f(states[i], y[ii], z);
            const double hy = 1e-2 * std::max(1.0, std::abs(y[ii]));
            const double lambda = (driver.f(states[i], y[ii] + hy, z) - driver.f(states[i], y[ii] - hy, z)) / (2.0 * hy);
            const double growth = std::exp(lambda * delta);
            const double phi = std::abs(lambda * delta) < 1e-8 ? 1.0 : std::expm1(lambda * delta) / (lambda * delta);
            target[ii] = carried[ii] * discount * growth + phi * delta * (f0 - lambda * y[ii]);
        }, 256);

        if (kk == 0) {
            sol.y0 = target.mean();
            const double var = (target.array() - sol.y0).square().sum() / static_cast<double>(n - 1);
            sol.y0_stderr = std::sqrt(var / static_cast<double>(n));
            sol.y_coefficients[kk] = Eigen::MatrixXd::Constant(1, 1, sol.y0);
            carried = target;
            diag.max_abs_y = std::abs(sol.y0);
        } else {
            const Eigen::MatrixXd phi = design_matrix(states, current);
            const auto fit = regress(phi, target);
            y = fit.fitted.col(0);
            carried = target;
            sol.y_coefficients[kk] = fit.coefficients;
            diag.max_abs_y = y.cwiseAbs().maxCoeff();
        }
        sol.max_abs_y = std::max(sol.max_abs_y, diag.max_abs_y);
    }

    if (sol.max_abs_y > sol.y_bound * (1.0 + options.bound_slack) + 1e-12) {
        std::ostringstream msg;
        msg << "regression bias, enlarge basis or paths: max |Y| = " << sol.max_abs_y << " exceeds the a priori bound "
            << sol.y_bound;
        throw NumericalError(msg.str());
    }
    return sol;
}

}  // namespace robin_homog
