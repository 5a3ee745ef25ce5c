#pragma once

#include "robin_homog/types.hpp"

#include <functional>
#include <vector>

namespace robin_homog {

/// Constant-coefficient problem
///   d_t u + (sigma^2 / 2) (u_rr + (d - 1) u_r / r) + f(r, u, u_r) = 0 on the ball of radius R,
///   u(T) = g,  u_r(R) = (2 C / sigma^2) u(R),
/// i.e. 1/2 d_nu u + C u = 0 with the inward conormal -sigma^2 e_r.
struct RadialProblem {
    double a_bar_scalar = 1.0;
    double C_bar = 0.0;
    double R = 1.0;
    double T = 1.0;
    int dim = 2;
    std::function<double(double r)> g_radial;
    std::function<double(double r, double y, double z_r)> f_bar_radial;
    int nr = 400;
    int nt = 800;

    /// Uses sigma^2 = mean eigenvalue of a_bar; refuses ("oracle inapplicable")
    /// unless the eigenvalues agree within 1%.
    static RadialProblem isotropic(const Mat& a_bar, double C_bar, double R, double T, int dim);
};

struct RadialSolution {
    std::vector<double> r;
    /// u(0, r_j).
    std::vector<double> u;
    double u_center = 0.0;
    /// Time steps actually used after any reductions.
    int nt_used = 0;
};

RadialSolution solve_radial(const RadialProblem& problem);

/// True when the eigenvalues of a_bar agree within `tolerance` relative spread.
bool is_isotropic(const Mat& a_bar, double tolerance = 0.01);

}  // namespace robin_homog
