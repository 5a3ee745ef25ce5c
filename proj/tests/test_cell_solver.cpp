#include "robin_homog/cell_solver.hpp"
#include "robin_homog/families.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace robin_homog;

namespace {
constexpr double kPi = std::numbers::pi;

double max_abs_diff(const Mat& a, const Mat& b) { return (a - b).cwiseAbs().maxCoeff(); }
}  // namespace

TEST_CASE("zero drift gives the uniform invariant measure") {
    for (const auto& coeffs : {identity_family(2), layered_family(2, 0.5), checkerboard_family(2, 0.4)}) {
        const CellProblem problem(coeffs, 32);
        const auto m = solve_invariant_measure(problem);
        CHECK((m.values.array() - 1.0).abs().maxCoeff() < 1e-10);
        CHECK(centering_residual(problem, m).norm() < 1e-12);
    }
}

TEST_CASE("constant drift keeps the uniform measure but is not centered") {
    const CellProblem problem(constant_drift_family(2, 1.0), 32);
    const auto m = solve_invariant_measure(problem);
    CHECK((m.values.array() - 1.0).abs().maxCoeff() < 1e-10);
    const Vec r = centering_residual(problem, m);
    CHECK(r[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(std::abs(r[1]) < 1e-12);
    CHECK_THROWS_AS(solve_correctors(problem, m), PreconditionError);
}

TEST_CASE("admissible drift: recovered measure matches the target density") {
    const CellProblem problem(admissible_family(2, 0.5), 256);
    MeasureSolveInfo info;
    const auto m = solve_invariant_measure(problem, &info);
    double worst = 0.0;
    for (std::size_t j = 0; j < problem.grid().size(); ++j) {
        const double x1 = problem.grid().point(j)[0];
        worst = std::max(worst, std::abs(m.values[static_cast<Eigen::Index>(j)] - (1.0 + 0.5 * std::sin(2 * kPi * x1))));
    }
    CHECK(worst < 1e-6);
    CHECK(m.mean() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(m.min() > 0.0);
    CHECK(centering_residual(problem, m).norm() < 1e-8);
}

TEST_CASE("measure error decreases at least quadratically under refinement") {
    std::vector<double> errors;
    for (int n : {16, 32, 64}) {
        const CellProblem problem(admissible_family(2, 0.5), n);
        const auto m = solve_invariant_measure(problem);
        double worst = 0.0;
        for (std::size_t j = 0; j < problem.grid().size(); ++j) {
            const double x1 = problem.grid().point(j)[0];
            worst = std::max(worst, std::abs(m.values[static_cast<Eigen::Index>(j)] - (1.0 + 0.5 * std::sin(2 * kPi * x1))));
        }
        errors.push_back(worst);
    }
    CHECK(std::log2(errors[0] / errors[1]) >= 2.0);
    CHECK(std::log2(errors[1] / errors[2]) >= 2.0);
}

TEST_CASE("discrete operator and its adjoint are exact transposes") {
    const CellProblem problem(checkerboard_family(2, 0.4), 32);
    auto coeffs = admissible_family(2, 0.3);
    const CellProblem drift_problem(coeffs, 32);
    for (const CellProblem* p : {&problem, &drift_problem}) {
        std::mt19937_64 rng(3);
        std::normal_distribution<double> normal;
        const auto n = static_cast<Eigen::Index>(p->grid().size());
        Eigen::VectorXd u(n), v(n), lu, lv;
        for (Eigen::Index i = 0; i < n; ++i) {
            u[i] = normal(rng);
            v[i] = normal(rng);
        }
        p->op().apply(u, lu);
        p->op().apply_adjoint(v, lv);
        const double lhs = lu.dot(v);
        const double rhs = u.dot(lv);
        CHECK(std::abs(lhs - rhs) <= 1e-12 * lu.norm() * v.norm());
    }
}

TEST_CASE("correctors") {
    SUBCASE("identity coefficients have vanishing correctors") {
        const CellProblem problem(identity_family(2), 32);
        const auto m = solve_invariant_measure(problem);
        const auto cs = solve_correctors(problem, m);
        for (const auto& w : cs.omega) CHECK(w.values.cwiseAbs().maxCoeff() < 1e-14);
        CHECK(max_abs_diff(effective_diffusion(problem, cs, m), Mat::Identity(2, 2)) < 1e-14);
    }
    SUBCASE("layered family matches the one-dimensional closed form") {
        const CellProblem problem(layered_family(2, 0.5), 256);
        const auto m = solve_invariant_measure(problem);
        const auto cs = solve_correctors(problem, m);
        double worst = 0.0;
        for (std::size_t j = 0; j < problem.grid().size(); ++j) {
            const double x1 = problem.grid().point(j)[0];
            worst = std::max(worst, std::abs(cs.grad_omega[0].components[0][static_cast<Eigen::Index>(j)] -
                                             0.5 * std::sin(2 * kPi * x1)));
        }
        CHECK(worst < 1e-6);
        CHECK(cs.omega[1].values.cwiseAbs().maxCoeff() < 1e-14);
        CHECK(std::abs(cs.omega[0].values.dot(m.values)) / static_cast<double>(m.values.size()) < 1e-12);
        for (std::size_t j = 0; j < problem.grid().size(); j += 97) {
            CHECK(cs.grad_omega_tilde[j](0, 0) == doctest::Approx(1.0 + cs.grad_omega[0].components[0][static_cast<Eigen::Index>(j)]));
        }
        const Mat a_bar = effective_diffusion(problem, cs, m);
        CHECK(max_abs_diff(a_bar, Mat::Identity(2, 2)) < 1e-5);
    }
    SUBCASE("scaled identity scales the effective tensor") {
        const CellProblem problem(constant_matrix_family(2.0 * Mat::Identity(2, 2)), 16);
        const auto m = solve_invariant_measure(problem);
        const auto cs = solve_correctors(problem, m);
        CHECK(max_abs_diff(effective_diffusion(problem, cs, m), 2.0 * Mat::Identity(2, 2)) < 1e-14);
    }
}

TEST_CASE("effective tensor lies between the harmonic and arithmetic bounds") {
    const CellProblem problem(checkerboard_family(2, 0.6), 64);
    const auto m = solve_invariant_measure(problem);
    const auto cs = solve_correctors(problem, m);
    const Mat a_bar = effective_diffusion(problem, cs, m);
    const auto vr = voigt_reuss_bounds(problem, m);
    Eigen::SelfAdjointEigenSolver<Mat> lo(vr.lower), hi(vr.upper), mid(a_bar);
    CHECK(mid.eigenvalues().minCoeff() >= lo.eigenvalues().minCoeff() - 1e-10);
    CHECK(mid.eigenvalues().maxCoeff() <= hi.eigenvalues().maxCoeff() + 1e-10);
    CHECK((a_bar - a_bar.transpose()).norm() < 1e-14);
}

TEST_CASE("effective tensor converges under grid refinement") {
    std::vector<Mat> abar;
    for (int n : {16, 32, 64, 128}) {
        const CellProblem problem(checkerboard_family(2, 0.6), n);
        const auto m = solve_invariant_measure(problem);
        abar.push_back(effective_diffusion(problem, solve_correctors(problem, m), m));
    }
    const double d1 = max_abs_diff(abar[0], abar[1]);
    const double d2 = max_abs_diff(abar[1], abar[2]);
    CHECK(std::log2(d1 / d2) >= 1.9);
    CHECK(max_abs_diff(abar[2], abar[3]) < 1e-6);
}

TEST_CASE("effective tensor is invariant under swapping coordinates") {
    auto coeffs = layered_family(2, 0.5);
    auto swapped = coeffs;
    Mat p(2, 2);
    p << 0, 1, 1, 0;
    const auto A = coeffs.A;
    const auto divA = coeffs.divA;
    swapped.A = [A, p](const Vec& y) -> Mat { return p * A(p * y) * p; };
    swapped.divA = [divA, p](const Vec& y) -> Vec { return p * divA(p * y); };
    auto solve = [](const PeriodicCoefficients& c) {
        const CellProblem problem(c, 64);
        const auto m = solve_invariant_measure(problem);
        return effective_diffusion(problem, solve_correctors(problem, m), m);
    };
    const Mat a = solve(coeffs);
    const Mat b = solve(swapped);
    CHECK(max_abs_diff(a, p * b * p) < 1e-8);
}

TEST_CASE("effective nonlinearity") {
    const CellProblem problem(layered_family(2, 0.5), 128);
    const auto m = solve_invariant_measure(problem);
    const auto cs = solve_correctors(problem, m);
    Vec x(2), z(2);
    x << 0.2, -0.1;
    z << 0.7, -1.3;
    SUBCASE("z-independent driver is unchanged") {
        const Nonlinearity f = [](const Vec& xx, double y, const Vec&) { return -y + xx[0]; };
        const auto fb = effective_nonlinearity(f, cs, m);
        CHECK(fb(x, 0.4, z) == doctest::Approx(f(x, 0.4, z)).epsilon(1e-14));
    }
    SUBCASE("linear in z averages the corrector gradient to the identity") {
        const Nonlinearity f = [](const Vec&, double, const Vec& zz) { return zz[0]; };
        const auto fb = effective_nonlinearity(f, cs, m);
        CHECK(fb(x, 0.0, z) == doctest::Approx(z[0]).epsilon(1e-10));
    }
    SUBCASE("zero correctors leave a quadratic form unchanged") {
        const CellProblem ip(identity_family(2), 16);
        const auto mi = solve_invariant_measure(ip);
        const auto ci = solve_correctors(ip, mi);
        const Nonlinearity f = [](const Vec&, double, const Vec& zz) { return zz.squaredNorm(); };
        CHECK(effective_nonlinearity(f, ci, mi)(x, 0.0, z) == doctest::Approx(z.squaredNorm()).epsilon(1e-14));
    }
}

TEST_CASE("corrector gradient norms") {
    SUBCASE("identity gives unit norms for every p") {
        const CellProblem problem(identity_family(2), 16);
        const auto m = solve_invariant_measure(problem);
        const auto cs = solve_correctors(problem, m);
        for (double p : {1.0, 2.0, 7.5}) {
            for (double v : corrector_gradient_lp(cs, p)) CHECK(v == doctest::Approx(1.0));
        }
    }
    SUBCASE("layered family: closed-form square norm, grid stable, nondecreasing in p") {
        std::vector<std::vector<double>> l2, l4;
        for (int n : {128, 256}) {
            const CellProblem problem(layered_family(2, 0.5), n);
            const auto m = solve_invariant_measure(problem);
            const auto cs = solve_correctors(problem, m);
            l2.push_back(corrector_gradient_lp(cs, 2.0));
            l4.push_back(corrector_gradient_lp(cs, 4.0));
            double prev = 0.0;
            for (double p : {1.0, 1.5, 2.0, 3.0, 4.0, 8.0, 16.0}) {
                const double v = corrector_gradient_lp(cs, p)[0];
                CHECK(v >= prev - 1e-14);
                prev = v;
            }
        }
        CHECK(l2[1][0] * l2[1][0] == doctest::Approx(1.125).epsilon(1e-6));
        CHECK(std::abs(l2[0][0] - l2[1][0]) < 1e-4);
        CHECK(std::abs(l4[0][0] - l4[1][0]) < 1e-4);
    }
    SUBCASE("exponent outside the supported range is rejected") {
        const CellProblem problem(identity_family(2), 16);
        const auto m = solve_invariant_measure(problem);
        const auto cs = solve_correctors(problem, m);
        CHECK_THROWS_AS(corrector_gradient_lp(cs, 0.5), PreconditionError);
        CHECK_THROWS_AS(corrector_gradient_lp(cs, 17.0), PreconditionError);
    }
}

TEST_CASE("grid size preconditions") {
    CHECK_THROWS_AS(CellProblem(identity_family(2), 24), PreconditionError);
    CHECK_THROWS_AS(CellProblem(identity_family(2), 8), PreconditionError);
    const CellProblem a(identity_family(2), 16);
    const CellProblem b(identity_family(2), 32);
    const auto m = solve_invariant_measure(a);
    CHECK_THROWS_AS(centering_residual(b, m), PreconditionError);
}
