#include "robin_homog/reference_solver.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace robin_homog;

namespace {
RadialProblem base_problem() {
    RadialProblem p;
    p.a_bar_scalar = 1.0;
    p.R = 1.0;
    p.T = 0.5;
    p.dim = 2;
    p.g_radial = [](double) { return 1.0; };
    return p;
}
}  // namespace

TEST_CASE("Neumann problem with constant data stays constant") {
    auto p = base_problem();
    const auto sol = solve_radial(p);
    for (double u : sol.u) CHECK(u == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sol.u_center == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sol.r.size() == sol.u.size());
}

TEST_CASE("linear decay gives exp(-T) everywhere") {
    auto p = base_problem();
    p.f_bar_radial = [](double, double y, double) { return -y; };
    const auto sol = solve_radial(p);
    for (double u : sol.u) CHECK(std::abs(u - std::exp(-p.T)) < 1e-5);
}

TEST_CASE("manufactured solution (1 + t)(r^2 - 2) with C = -1") {
    for (int dim : {2, 3}) {
        auto p = base_problem();
        p.C_bar = -1.0;
        p.dim = dim;
        p.g_radial = [&](double r) { return (1.0 + p.T) * (r * r - 2.0); };
        p.f_bar_radial = [dim](double r, double y, double) {
            const double q = r * r - 2.0;
            return -q - dim * y / q;
        };
        const auto sol = solve_radial(p);
        double worst = 0.0;
        for (std::size_t j = 0; j < sol.r.size(); ++j) worst = std::max(worst, std::abs(sol.u[j] - (sol.r[j] * sol.r[j] - 2.0)));
        CHECK(worst < 1e-4);
        CHECK(sol.u_center == doctest::Approx(-2.0).epsilon(1e-4));
    }
}

TEST_CASE("self-convergence of the Robin decay problem") {
    auto p = base_problem();
    p.C_bar = -1.0;
    p.nr = 200;
    p.nt = 400;
    const double coarse = solve_radial(p).u_center;
    p.nr = 400;
    p.nt = 800;
    const double fine = solve_radial(p).u_center;
    CHECK(std::abs(coarse - fine) < 1e-4);
    CHECK(fine < 1.0);
    CHECK(fine > std::exp(-2.0 * p.T));
}

TEST_CASE("isotropy and preconditions") {
    Mat a = Mat::Identity(2, 2);
    CHECK(is_isotropic(a));
    a(1, 1) = 1.005;
    CHECK(is_isotropic(a));
    const auto p = RadialProblem::isotropic(a, -1.0, 1.0, 0.5, 2);
    CHECK(p.a_bar_scalar == doctest::Approx(1.0025));
    a(1, 1) = 1.1;
    CHECK_FALSE(is_isotropic(a));
    CHECK_THROWS_AS(RadialProblem::isotropic(a, -1.0, 1.0, 0.5, 2), PreconditionError);

    auto bad = base_problem();
    bad.C_bar = 0.5;
    CHECK_THROWS_AS(solve_radial(bad), PreconditionError);
    bad = base_problem();
    bad.g_radial = nullptr;
    CHECK_THROWS_AS(solve_radial(bad), PreconditionError);
    bad = base_problem();
    bad.nr = 2;
    CHECK_THROWS_AS(solve_radial(bad), PreconditionError);
}
