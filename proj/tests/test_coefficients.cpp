#include "robin_homog/coefficients.hpp"
#include "robin_homog/families.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace robin_homog;

namespace {
constexpr double kPi = std::numbers::pi;

Vec point(double a, double b) {
    Vec x(2);
    x << a, b;
    return x;
}
}  // namespace

TEST_CASE("identity coefficients have zero effective drift on the grid") {
    const auto gc = sample_on_grid(identity_family(2), 8);
    REQUIRE(gc.grid.size() == 64);
    for (const auto& bt : gc.b_tilde) CHECK(bt.norm() == 0.0);
}

TEST_CASE("layered family: sampled effective drift is half the analytic derivative") {
    const auto coeffs = layered_family(2, 0.5);
    const auto gc = sample_on_grid(coeffs, 64);
    double worst = 0.0;
    for (std::size_t j = 0; j < gc.grid.size(); ++j) {
        const double x1 = gc.grid.point(j)[0];
        const double s = std::sin(2 * kPi * x1);
        const double da = -0.5 * 2 * kPi * std::cos(2 * kPi * x1) / ((1 + 0.5 * s) * (1 + 0.5 * s));
        worst = std::max(worst, std::abs(gc.b_tilde[j][0] - 0.5 * da));
        CHECK(gc.b_tilde[j][1] == 0.0);
    }
    CHECK(worst < 1e-14);
}

TEST_CASE("coefficient fields are periodic") {
    for (const auto& coeffs : {layered_family(2, 0.5), admissible_family(2, 0.5), checkerboard_family(2, 0.4)}) {
        const Vec x = point(0.137, 0.771);
        for (int i = 0; i < 2; ++i) {
            Vec shifted = x;
            shifted[i] += 1.0;
            CHECK((coeffs.A(x) - coeffs.A(shifted)).norm() <= 1e-14);
            CHECK((coeffs.divA(x) - coeffs.divA(shifted)).norm() <= 1e-12);
            CHECK((coeffs.b(x) - coeffs.b(shifted)).norm() <= 1e-12);
        }
    }
}

TEST_CASE("analytic divergence matches a finite-difference check") {
    const auto coeffs = checkerboard_family(2, 0.4);
    const Vec x = point(0.31, 0.62);
    const double h = 1e-5;
    Vec fd = Vec::Zero(2);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            Vec xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            fd[i] += (coeffs.A(xp)(i, j) - coeffs.A(xm)(i, j)) / (2 * h);
        }
    }
    CHECK((fd - coeffs.divA(x)).norm() < 1e-8);
}

TEST_CASE("grid sampling refuses more nodes than the cap") {
    CHECK_THROWS_AS(sample_on_grid(identity_family(2), 64, 1000), PreconditionError);
}

TEST_CASE("admissible drift construction") {
    const auto identity = [](const Vec&) -> Mat { return Mat::Identity(2, 2); };
    SUBCASE("constant density gives zero drift") {
        SmoothTorusFunction m{[](const Vec&) { return 1.0; }, [](const Vec&) -> Vec { return Vec::Zero(2); }};
        const auto b = make_admissible_drift(2, identity, m);
        CHECK(b(point(0.3, 0.4)).norm() == 0.0);
        const auto diag = [](const Vec&) -> Mat { return Vec(Eigen::Vector2d(2.0, 1.0)).asDiagonal(); };
        CHECK(make_admissible_drift(2, diag, m)(point(0.7, 0.1)).norm() == 0.0);
    }
    SUBCASE("sinusoidal density gives the closed-form drift") {
        const auto m = admissible_density(2, 0.5);
        const auto b = make_admissible_drift(2, identity, m);
        for (double x1 : {0.0, 0.1, 0.33, 0.8}) {
            const Vec x = point(x1, 0.25);
            const double expect = 0.5 * kPi * std::cos(2 * kPi * x1) / (1 + 0.5 * std::sin(2 * kPi * x1));
            CHECK(b(x)[0] == doctest::Approx(expect).epsilon(1e-13));
            CHECK(b(x)[1] == 0.0);
        }
    }
    SUBCASE("rejects non-positive or non-normalized densities") {
        SmoothTorusFunction neg{[](const Vec& y) { return 1.0 + 1.5 * std::sin(2 * kPi * y[0]); },
                                [](const Vec& y) -> Vec {
                                    Vec g = Vec::Zero(2);
                                    g[0] = 3 * kPi * std::cos(2 * kPi * y[0]);
                                    return g;
                                }};
        CHECK_THROWS_AS(make_admissible_drift(2, identity, neg), PreconditionError);
        SmoothTorusFunction two{[](const Vec&) { return 2.0; }, [](const Vec&) -> Vec { return Vec::Zero(2); }};
        CHECK_THROWS_AS(make_admissible_drift(2, identity, two), PreconditionError);
    }
}

TEST_CASE("validation report") {
    SUBCASE("identity is elliptic with unit Rayleigh quotients") {
        const auto rep = validate(identity_family(2));
        CHECK(rep.rayleigh_min == doctest::Approx(1.0));
        CHECK(rep.rayleigh_max == doctest::Approx(1.0));
        CHECK(rep.ok());
    }
    SUBCASE("oscillating Robin coefficient stays in range") {
        auto coeffs = identity_family(2);
        set_robin(coeffs, "oscillating(-1,0.5)");
        const auto rep = validate(coeffs);
        CHECK(coeffs.alpha == doctest::Approx(1.5));
        CHECK(rep.c_min >= -1.5 - 1e-12);
        CHECK(rep.c_max <= -0.5 + 1e-12);
        CHECK(rep.c_range_ok);
    }
    SUBCASE("indefinite matrix fails ellipticity") {
        auto coeffs = identity_family(2);
        coeffs.A = [](const Vec&) -> Mat { return Vec(Eigen::Vector2d(1.0, -1.0)).asDiagonal(); };
        const auto rep = validate(coeffs);
        CHECK_FALSE(rep.ellipticity_ok);
        CHECK_FALSE(rep.ok());
    }
    SUBCASE("validation is deterministic") {
        const auto a = validate(checkerboard_family(2, 0.3));
        const auto b = validate(checkerboard_family(2, 0.3));
        CHECK(a.summary() == b.summary());
    }
}

TEST_CASE("family spec parsing") {
    const auto s = parse_family_spec(" oscillating( -1 , 0.5 ) ");
    CHECK(s.name == "oscillating");
    REQUIRE(s.args.size() == 2);
    CHECK(s.args[0] == -1.0);
    CHECK(s.args[1] == 0.5);
    CHECK(parse_family_spec("identity").args.empty());
    CHECK_THROWS_AS(parse_family_spec("layered(x)"), PreconditionError);
    CHECK_THROWS_AS(make_coefficients("layered(1.5)", 2), PreconditionError);
    auto c = identity_family(2);
    CHECK_THROWS_AS(set_robin(c, "constant(0.5)"), PreconditionError);
    CHECK_THROWS_AS(set_robin(c, "oscillating(-0.2,0.5)"), PreconditionError);
}

TEST_CASE("built-in drivers satisfy their declared bounds") {
    for (const char* f : {"zero", "decay(1)", "decay-gradient(1,0.1)", "saturating(0.5,0.2)"}) {
        const auto drv = make_driver(f, "bowl");
        const auto chk = spot_check_driver(drv, 2);
        CHECK_MESSAGE(chk.monotone_ok, f);
        CHECK_MESSAGE(chk.lipschitz_ok, f);
    }
    const auto bowl = make_driver("zero", "bowl");
    CHECK(bowl.g(point(0, 0)) == 1.0);
    CHECK(bowl.g(point(1, 0)) == 0.5);
    CHECK(make_driver("decay(1)", "one").rotation_invariant);
    CHECK_FALSE(make_driver("decay-gradient(1,0.1)", "one").rotation_invariant);
}
