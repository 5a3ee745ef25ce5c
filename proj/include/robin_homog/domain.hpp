#pragma once

#include "robin_homog/types.hpp"

#include <cstdint>
#include <limits>
#include <string>

namespace robin_homog {

enum class DomainKind { Ball, Ellipsoid, Generic };

enum class Location { Interior, Boundary, Exterior };

struct Classification {
    Location where;
    double psi;
};

struct Reflection {
    Vec boundary_point;
    Vec corrected;
    double dk = 0.0;
};

/// Bounded convex C^1 domain {psi > 0}. Balls and axis-aligned ellipsoids use closed
/// forms; generic domains are described by psi, its gradient and an interior point.
class ConvexDomain {
public:
    static ConvexDomain ball(int dim, double radius, Vec center = {});
    static ConvexDomain ellipsoid(const Vec& semi_axes);
    static ConvexDomain generic(int dim, TorusScalarFn psi, TorusVectorFn grad_psi, double bounding_radius,
                                Vec interior_point = {});

    int dim() const { return dim_; }
    DomainKind kind() const { return kind_; }
    double bounding_radius() const { return bounding_radius_; }
    const Vec& center() const { return center_; }
    const Vec& semi_axes() const { return semi_axes_; }
    double geometric_tolerance() const { return 1e-12 * bounding_radius_; }

    double psi(const Vec& x) const;
    Vec grad_psi(const Vec& x) const;

    Classification classify(const Vec& x) const;
    bool contains(const Vec& x) const { return classify(x).where != Location::Exterior; }

    /// Unit inward normal grad psi / |grad psi| at a boundary point.
    Vec inward_normal(const Vec& x) const;

    /// Euclidean closest point on the boundary.
    Vec closest_point(const Vec& x) const;

    /// Same, by the iterative projector used for generic domains. The iteration is
    /// local: reliable outside the domain and near the boundary, where the simulator uses it.
    Vec closest_point_iterative(const Vec& x) const;

    /// Distance to the boundary, positive inside and negative outside.
    double signed_distance(const Vec& x) const;

    /// Minimal dk >= 0 with x + dk * direction in the closed domain. Throws
    /// NumericalError for a degenerate direction and StepRejection beyond dk_max.
    Reflection project_and_reflect(const Vec& x, const Vec& direction,
                                   double dk_max = std::numeric_limits<double>::infinity()) const;

    /// Boundary point hit by the ray from the interior point along `direction`.
    Vec boundary_along_ray(const Vec& direction) const;

    std::string describe() const;

private:
    double reflection_root(const Vec& x, const Vec& direction, double t_guess, double dk_max) const;

    int dim_ = 2;
    DomainKind kind_ = DomainKind::Ball;
    double bounding_radius_ = 1.0;
    double radius_ = 1.0;
    Vec center_;
    Vec semi_axes_;
    TorusScalarFn psi_;
    TorusVectorFn grad_psi_;
};

struct DomainCheck {
    double min_grad_norm = 0.0;
    bool gradient_ok = false;
    bool convexity_ok = false;
    int chords_tested = 0;
};

/// Boundary sampling check of inf |grad psi| > 0 and of chord midpoints lying inside.
DomainCheck check_domain(const ConvexDomain& domain, int samples = 256, std::uint64_t seed = 11);

}  // namespace robin_homog
