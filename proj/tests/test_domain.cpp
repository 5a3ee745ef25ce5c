#include "robin_homog/domain.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace robin_homog;

namespace {
Vec v2(double a, double b) {
    Vec x(2);
    x << a, b;
    return x;
}

/// Closest boundary point of the ellipse by dense sampling of the parametrization.
Vec brute_force_closest(const Vec& x, double a, double b) {
    double best = std::numeric_limits<double>::infinity();
    double best_t = 0.0;
    const int n = 200000;
    for (int k = 0; k < n; ++k) {
        const double t = 2.0 * std::numbers::pi * k / n;
        const double d = std::hypot(a * std::cos(t) - x[0], b * std::sin(t) - x[1]);
        if (d < best) {
            best = d;
            best_t = t;
        }
    }
    double lo = best_t - 4.0 * std::numbers::pi / n, hi = best_t + 4.0 * std::numbers::pi / n;
    auto dist = [&](double t) { return std::hypot(a * std::cos(t) - x[0], b * std::sin(t) - x[1]); };
    for (int it = 0; it < 200; ++it) {
        const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
        if (dist(m1) < dist(m2)) hi = m2; else lo = m1;
    }
    const double t = 0.5 * (lo + hi);
    return v2(a * std::cos(t), b * std::sin(t));
}
}  // namespace

TEST_CASE("classification of points against the unit disk") {
    const auto disk = ConvexDomain::ball(2, 1.0);
    const auto c0 = disk.classify(v2(0, 0));
    CHECK(c0.where == Location::Interior);
    CHECK(c0.psi == doctest::Approx(1.0));
    CHECK(disk.classify(v2(1, 0)).where == Location::Boundary);
    const auto c2 = disk.classify(v2(2, 0));
    CHECK(c2.where == Location::Exterior);
    CHECK(c2.psi == doctest::Approx(-3.0));
}

TEST_CASE("inward normals") {
    const auto disk = ConvexDomain::ball(2, 1.0);
    CHECK((disk.inward_normal(v2(1, 0)) - v2(-1, 0)).norm() < 1e-15);
    CHECK((disk.inward_normal(v2(0, -1)) - v2(0, 1)).norm() < 1e-15);
    const auto ellipse = ConvexDomain::ellipsoid(v2(2, 1));
    CHECK((ellipse.inward_normal(v2(2, 0)) - v2(-1, 0)).norm() < 1e-15);
    const Vec x = ellipse.boundary_along_ray(v2(0.3, 0.8));
    const Vec n = ellipse.inward_normal(x);
    CHECK(ellipse.psi(x + 1e-6 * n) > 0.0);
}

TEST_CASE("oblique projection onto the disk") {
    const auto disk = ConvexDomain::ball(2, 1.0);
    SUBCASE("colinear direction") {
        const auto r = disk.project_and_reflect(v2(1.1, 0), v2(-1, 0));
        CHECK(r.dk == doctest::Approx(0.1).epsilon(1e-12));
        CHECK((r.corrected - v2(1, 0)).norm() < 1e-12);
        CHECK((r.boundary_point - v2(1, 0)).norm() < 1e-15);
    }
    SUBCASE("oblique direction solves the quadratic and agrees with bisection") {
        const Vec x = v2(1.1, 0);
        const Vec dir = v2(-1, 0.5).normalized();
        const auto r = disk.project_and_reflect(x, dir);
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if ((x + mid * dir).norm() > 1.0) lo = mid; else hi = mid;
        }
        CHECK(r.dk == doctest::Approx(hi).epsilon(1e-12));
        CHECK(r.corrected.norm() <= 1.0 + 1e-12);
        CHECK(std::abs(r.corrected.norm() - 1.0) < 1e-12);
    }
    SUBCASE("interior point is unchanged") {
        const auto r = disk.project_and_reflect(v2(0.3, 0.2), v2(-1, 0));
        CHECK(r.dk == 0.0);
        CHECK((r.corrected - v2(0.3, 0.2)).norm() == 0.0);
    }
    SUBCASE("degenerate and capped corrections") {
        CHECK_THROWS_AS(disk.project_and_reflect(v2(1.1, 0), v2(0, 1)), NumericalError);
        CHECK_THROWS_AS(disk.project_and_reflect(v2(1.1, 0), v2(1, 0)), NumericalError);
        CHECK_THROWS_AS(disk.project_and_reflect(v2(1.5, 0), v2(-1, 0), 0.1), StepRejection);
    }
}

TEST_CASE("projection never leaves the closed domain and dk vanishes only inside") {
    const auto ellipse = ConvexDomain::ellipsoid(v2(2, 1));
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int k = 0; k < 2000; ++k) {
        const Vec x = v2(u(rng), u(rng));
        if (ellipse.signed_distance(x) < -0.3) continue;
        const Vec xb = ellipse.closest_point(x);
        const Vec dir = (ellipse.inward_normal(xb) + 0.3 * v2(u(rng), u(rng)) / 3.0).normalized();
        if (dir.dot(ellipse.inward_normal(xb)) < 0.2) continue;
        const auto r = ellipse.project_and_reflect(x, dir);
        CHECK(ellipse.contains(r.corrected));
        CHECK((r.dk == 0.0) == ellipse.contains(x));
    }
}

TEST_CASE("closest point: closed forms agree with the iterative projector and brute force") {
    const auto disk = ConvexDomain::ball(2, 1.0);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int k = 0; k < 200; ++k) {
        const Vec x = v2(u(rng), u(rng));
        if (x.norm() < 1e-3) continue;
        CHECK((disk.closest_point(x) - x / x.norm()).norm() < 1e-15);
        CHECK((disk.closest_point_iterative(x) - x / x.norm()).norm() < 1e-12);
    }
    const auto ellipse = ConvexDomain::ellipsoid(v2(2, 1));
    for (const Vec& x : {v2(2.5, 0.7), v2(0.3, 0.2), v2(-1.0, -1.5), v2(0.05, 0.0)}) {
        const Vec expect = brute_force_closest(x, 2, 1);
        CHECK((ellipse.closest_point(x) - expect).norm() < 1e-8);
    }
    for (const Vec& x : {v2(2.5, 0.7), v2(-1.0, -1.5), v2(1.2, 0.75), v2(-0.4, 0.93)}) {
        CHECK((ellipse.closest_point_iterative(x) - ellipse.closest_point(x)).norm() < 1e-9);
    }
}

TEST_CASE("signed distance") {
    const auto disk = ConvexDomain::ball(2, 2.0);
    CHECK(disk.signed_distance(v2(0.5, 0)) == doctest::Approx(1.5));
    CHECK(disk.signed_distance(v2(0, -3)) == doctest::Approx(-1.0));
}

TEST_CASE("generic domain built from a level set") {
    const auto g = ConvexDomain::generic(
        2, [](const Vec& x) { return 1.0 - x.squaredNorm(); }, [](const Vec& x) -> Vec { return -2.0 * x; }, 1.0);
    const auto r = g.project_and_reflect(v2(1.1, 0), v2(-1, 0));
    CHECK(r.dk == doctest::Approx(0.1).epsilon(1e-10));
    CHECK((g.closest_point(v2(0, 3)) - v2(0, 1)).norm() < 1e-10);
}

TEST_CASE("domain self-check") {
    for (const auto& dom : {ConvexDomain::ball(2, 1.0), ConvexDomain::ellipsoid(v2(2, 1))}) {
        const auto chk = check_domain(dom);
        CHECK(chk.gradient_ok);
        CHECK(chk.convexity_ok);
        CHECK(chk.min_grad_norm > 0.0);
    }
    Vec axes(3);
    axes << 1.0, 2.0, 0.5;
    const auto e3 = ConvexDomain::ellipsoid(axes);
    CHECK(check_domain(e3).convexity_ok);
}
