#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace robin_homog::detail {

struct GmresResult {
    int iterations = 0;
    double residual_norm = 0.0;
    bool converged = false;
};

/// Restarted GMRES with right preconditioning, x = M y. `apply(in, out)` and
/// `precond(in, out)` must not alias their arguments. Norms are Euclidean.
template <class Apply, class Precond>
GmresResult gmres(const Apply& apply, const Precond& precond, const Eigen::VectorXd& rhs, Eigen::VectorXd& x,
                  double abs_tol, int restart, int max_iterations) {
    using Eigen::VectorXd;
    const Eigen::Index n = rhs.size();
    GmresResult res;
    VectorXd r(n), w(n), z(n);
    std::vector<VectorXd> basis(static_cast<std::size_t>(restart) + 1, VectorXd(n));
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(restart + 1, restart);
    VectorXd cs(restart), sn(restart), g(restart + 1);

    auto true_residual = [&]() {
        apply(x, w);
        r = rhs - w;
        return r.norm();
    };

    double beta = true_residual();
    res.residual_norm = beta;
    if (beta <= abs_tol) {
        res.converged = true;
        return res;
    }
    while (res.iterations < max_iterations) {
        basis[0] = r / beta;
        g.setZero();
        g[0] = beta;
        h.setZero();
        int k = 0;
        for (; k < restart && res.iterations < max_iterations; ++k) {
            ++res.iterations;
            precond(basis[static_cast<std::size_t>(k)], z);
            apply(z, w);
            for (int i = 0; i <= k; ++i) {
                h(i, k) = basis[static_cast<std::size_t>(i)].dot(w);
                w.noalias() -= h(i, k) * basis[static_cast<std::size_t>(i)];
            }
            h(k + 1, k) = w.norm();
            if (h(k + 1, k) > 0.0) basis[static_cast<std::size_t>(k) + 1] = w / h(k + 1, k);
            for (int i = 0; i < k; ++i) {
                const double t = cs[i] * h(i, k) + sn[i] * h(i + 1, k);
                h(i + 1, k) = -sn[i] * h(i, k) + cs[i] * h(i + 1, k);
                h(i, k) = t;
            }
            const double denom = std::hypot(h(k, k), h(k + 1, k));
            cs[k] = denom > 0.0 ? h(k, k) / denom : 1.0;
            sn[k] = denom > 0.0 ? h(k + 1, k) / denom : 0.0;
            h(k, k) = denom;
            h(k + 1, k) = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k] * g[k];
            if (std::abs(g[k + 1]) <= abs_tol || h(k, k) == 0.0) {
                ++k;
                break;
            }
        }
        VectorXd y = h.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
        VectorXd update = VectorXd::Zero(n);
        for (int i = 0; i < k; ++i) update.noalias() += y[i] * basis[static_cast<std::size_t>(i)];
        precond(update, z);
        x += z;
        beta = true_residual();
        res.residual_norm = beta;
        if (beta <= abs_tol) {
            res.converged = true;
            return res;
        }
    }
    return res;
}

}  // namespace robin_homog::detail
