#include "robin_homog/bsde.hpp"
#include "robin_homog/families.hpp"
#include "stats.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace robin_homog;

namespace {
ReflectedPathEnsemble disk_ensemble(const PeriodicCoefficients& coeffs, double T, double dt, int slabs,
                                    std::size_t paths, std::uint64_t seed, double x1 = 0.0) {
    SimConfig cfg;
    cfg.T = T;
    cfg.dt = dt;
    cfg.n_paths = paths;
    cfg.x0 = Vec::Zero(2);
    cfg.x0[0] = x1;
    cfg.seed = seed;
    cfg.record_stride = static_cast<int>(cfg.steps() / static_cast<std::uint64_t>(slabs));
    return simulate_paths(coeffs, ConvexDomain::ball(2, 1.0), cfg);
}
}  // namespace

TEST_CASE("regression basis construction") {
    const auto disk = ConvexDomain::ball(2, 1.0);
    CHECK(RegressionBasis::polynomial(disk, 2).size() == 6);
    CHECK(RegressionBasis::polynomial(disk, 4).size() == 15);
    CHECK(RegressionBasis::polynomial(ConvexDomain::ball(3, 1.0), 2).size() == 10);
    CHECK(RegressionBasis::parse("deg=3", disk).size() == 10);
    CHECK(RegressionBasis::parse("poly(1)", disk).size() == 3);
    CHECK(RegressionBasis::parse("deg=3", disk).reduced().size() == 6);
    const auto radial = RegressionBasis::parse("radial(3,0.5)", disk);
    CHECK(radial.kind() == RegressionBasis::Kind::Radial);
    CHECK(radial.size() == 10);
    std::vector<double> vals(static_cast<std::size_t>(radial.size()));
    Vec x(2);
    x << 0.2, -0.4;
    radial.evaluate(x, vals.data());
    CHECK(vals[0] == 1.0);
    CHECK_THROWS_AS(RegressionBasis::parse("spline(3)", disk), PreconditionError);
    CHECK_THROWS_AS(RegressionBasis::parse("radial(0,0.5)", disk), PreconditionError);
}

TEST_CASE("least squares regression") {
    const auto disk = ConvexDomain::ball(2, 1.0);
    const auto basis = RegressionBasis::polynomial(disk, 2);
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::normal_distribution<double> normal;
    std::vector<Vec> states;
    for (int i = 0; i < 500; ++i) {
        Vec x(2);
        x << u(rng), u(rng);
        states.push_back(x);
    }
    const Eigen::MatrixXd phi = design_matrix(states, basis);

    SUBCASE("a basis column is recovered as its indicator vector") {
        for (int j = 0; j < basis.size(); ++j) {
            const auto r = regress(phi, phi.col(j));
            Eigen::VectorXd e = Eigen::VectorXd::Zero(basis.size());
            e[j] = 1.0;
            CHECK((r.coefficients.col(0) - e).cwiseAbs().maxCoeff() < 1e-10);
        }
    }
    SUBCASE("constant data are fitted exactly") {
        const auto r = regress(states, Eigen::MatrixXd::Constant(500, 1, 3.0), basis);
        CHECK((r.fitted.array() - 3.0).abs().maxCoeff() < 1e-12);
        CHECK_FALSE(r.ridge);
    }
    SUBCASE("noisy linear data recover the slope") {
        std::vector<Vec> xs;
        Eigen::MatrixXd y(100000, 1);
        for (int i = 0; i < 100000; ++i) {
            Vec x(2);
            x << u(rng), u(rng);
            xs.push_back(x);
            y(i, 0) = x[0] + 0.5 * normal(rng);
        }
        const auto lin = RegressionBasis::polynomial(disk, 1);
        const auto r = regress(xs, y, lin);
        Vec probe_a = Vec::Zero(2), probe_b = Vec::Zero(2);
        probe_b[0] = 1.0;
        std::vector<double> pa(3), pb(3);
        lin.evaluate(probe_a, pa.data());
        lin.evaluate(probe_b, pb.data());
        double slope = 0.0;
        for (int j = 0; j < 3; ++j) slope += (pb[j] - pa[j]) * r.coefficients(j, 0);
        CHECK(slope == doctest::Approx(1.0).epsilon(0.01));
    }
    SUBCASE("fewer samples than unknowns is refused") {
        const std::vector<Vec> few(states.begin(), states.begin() + 4);
        CHECK_THROWS_AS(regress(few, Eigen::MatrixXd::Ones(4, 1), basis), PreconditionError);
    }
    SUBCASE("collinear design switches to ridge") {
        Eigen::MatrixXd bad(500, 3);
        bad.col(0) = phi.col(0);
        bad.col(1) = phi.col(1);
        bad.col(2) = phi.col(1);
        const auto r = regress(bad, phi.col(1));
        CHECK(r.ridge);
        CHECK((r.fitted - phi.col(1)).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("trivial driver reproduces the terminal constant") {
    const auto ens = disk_ensemble(identity_family(2), 0.5, 1e-3, 10, 2000, 1, 0.5);
    const auto sol = solve_bsde(ens, make_driver("zero", "one"), RobinTerm::none(),
                                RegressionBasis::polynomial(ConvexDomain::ball(2, 1.0), 2));
    CHECK(std::abs(sol.y0 - 1.0) < 1e-12);
    CHECK(sol.y0_stderr < 1e-12);
    CHECK(sol.paths_used == 2000);
    CHECK(sol.y_coefficients.size() == 10);
}

TEST_CASE("linear decay driver gives exp(-T)") {
    const auto ens = disk_ensemble(identity_family(2), 0.5, 1e-3, 10, 2000, 2, 0.5);
    const auto sol = solve_bsde(ens, make_driver("decay(1)", "one"), RobinTerm::none(),
                                RegressionBasis::polynomial(ConvexDomain::ball(2, 1.0), 2));
    CHECK(std::abs(sol.y0 - std::exp(-0.5)) < 3 * sol.y0_stderr + 1e-12);
}

TEST_CASE("Robin term reproduces the Feynman-Kac mean over the same ensemble") {
    auto coeffs = identity_family(2);
    set_robin(coeffs, "constant(-1)");
    const auto ens = disk_ensemble(coeffs, 0.5, 1e-3, 10, 4000, 3, 0.8);
    std::vector<double> weights;
    for (std::uint64_t p = 0; p < ens.n_paths; ++p) weights.push_back(std::exp(ens.weighted_local_time(p)));
    const auto fk = test_support::mean_estimate(weights);
    const auto basis = RegressionBasis::polynomial(ConvexDomain::ball(2, 1.0), 4);
    const auto recorded = solve_bsde(ens, make_driver("zero", "one"), RobinTerm::recorded(), basis);
    const auto constant = solve_bsde(ens, make_driver("zero", "one"), RobinTerm::constant(-1.0), basis);
    CHECK(recorded.y0 == doctest::Approx(fk.mean).epsilon(1e-12));
    CHECK(constant.y0 == doctest::Approx(fk.mean).epsilon(1e-12));
    CHECK(recorded.y0_stderr == doctest::Approx(fk.stderr_of_mean).epsilon(1e-6));
    CHECK(recorded.y0 < 1.0);
}

TEST_CASE("thread count does not change the solution") {
    auto coeffs = layered_family(2, 0.5);
    set_robin(coeffs, "oscillating(-1,0.5)");
    const auto ens = disk_ensemble(coeffs, 0.25, 1e-3, 5, 1500, 4, 0.3);
    const auto basis = RegressionBasis::polynomial(ConvexDomain::ball(2, 1.0), 3);
    const auto driver = make_driver("decay-gradient(1,0.1)", "bowl");
    BsdeOptions one;
    one.threads = 1;
    BsdeOptions four;
    four.threads = 4;
    const auto a = solve_bsde(ens, driver, RobinTerm::recorded(), basis, one);
    const auto b = solve_bsde(ens, driver, RobinTerm::recorded(), basis, four);
    CHECK(a.y0 == b.y0);
    CHECK(a.y0_stderr == b.y0_stderr);
    CHECK(a.max_abs_y <= a.y_bound * 1.05);
}

TEST_CASE("preconditions") {
    const auto ens = disk_ensemble(identity_family(2), 0.5, 1e-3, 1, 200, 5);
    const auto basis = RegressionBasis::polynomial(ConvexDomain::ball(2, 1.0), 2);
    CHECK_THROWS_AS(solve_bsde(ens, make_driver("decay(100)", "one"), RobinTerm::none(), basis), PreconditionError);
    CHECK_THROWS_AS(solve_bsde(ens, make_driver("zero", "one"), RobinTerm::constant(0.5), basis), PreconditionError);
    CHECK_THROWS_AS(
        solve_bsde(ens, make_driver("zero", "one"), RobinTerm::none(), RegressionBasis::polynomial(ConvexDomain::ball(3, 1.0), 2)),
        PreconditionError);
    CHECK(y_apriori_bound(make_driver("zero", "one"), 0.5) == doctest::Approx(1.0));
}
