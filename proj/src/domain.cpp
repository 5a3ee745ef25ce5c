#include "robin_homog/domain.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace robin_homog {

namespace {

Vec project_to_level_set(const TorusScalarFn& psi, const TorusVectorFn& grad, Vec y, double tol) {
    for (int it = 0; it < 100; ++it) {
        const double p = psi(y);
        if (std::abs(p) <= tol) break;
        const Vec g = grad(y);
        const double gg = g.squaredNorm();
        if (gg == 0.0) throw NumericalError("degenerate boundary: vanishing level-set gradient");
        y -= (p / gg) * g;
    }
    return y;
}

}  // namespace

ConvexDomain ConvexDomain::ball(int dim, double radius, Vec center) {
    if (dim < 1 || dim > kMaxDim) throw PreconditionError("domain dimension must be 1..3");
    if (!(radius > 0.0)) throw PreconditionError("ball radius must be positive");
    if (center.size() == 0) center = Vec::Zero(dim);
    if (center.size() != dim) throw PreconditionError("ball center has the wrong dimension");
    ConvexDomain d;
    d.dim_ = dim;
    d.kind_ = DomainKind::Ball;
    d.radius_ = radius;
    d.center_ = center;
    d.semi_axes_ = Vec::Constant(dim, radius);
    d.bounding_radius_ = radius;
    d.psi_ = [center, radius](const Vec& x) { return radius * radius - (x - center).squaredNorm(); };
    d.grad_psi_ = [center](const Vec& x) -> Vec { return -2.0 * (x - center); };
    return d;
}

ConvexDomain ConvexDomain::ellipsoid(const Vec& semi_axes) {
    const int dim = static_cast<int>(semi_axes.size());
    if (dim < 1 || dim > kMaxDim) throw PreconditionError("domain dimension must be 1..3");
    if (!(semi_axes.minCoeff() > 0.0)) throw PreconditionError("ellipsoid semi-axes must be positive");
    ConvexDomain d;
    d.dim_ = dim;
    d.kind_ = DomainKind::Ellipsoid;
    d.center_ = Vec::Zero(dim);
    d.semi_axes_ = semi_axes;
    d.bounding_radius_ = semi_axes.maxCoeff();
    const Vec inv2 = semi_axes.array().square().inverse().matrix();
    d.psi_ = [inv2](const Vec& x) { return 1.0 - x.cwiseProduct(x).dot(inv2); };
    d.grad_psi_ = [inv2](const Vec& x) -> Vec { return -2.0 * x.cwiseProduct(inv2); };
    return d;
}

ConvexDomain ConvexDomain::generic(int dim, TorusScalarFn psi, TorusVectorFn grad_psi, double bounding_radius,
                                   Vec interior_point) {
    if (dim < 1 || dim > kMaxDim) throw PreconditionError("domain dimension must be 1..3");
    if (!psi || !grad_psi) throw PreconditionError("generic domain needs psi and its gradient");
    if (interior_point.size() == 0) interior_point = Vec::Zero(dim);
    if (!(psi(interior_point) > 0.0)) throw PreconditionError("generic domain interior point is not inside");
    ConvexDomain d;
    d.dim_ = dim;
    d.kind_ = DomainKind::Generic;
    d.center_ = interior_point;
    d.semi_axes_ = Vec::Constant(dim, bounding_radius);
    d.bounding_radius_ = bounding_radius;
    d.psi_ = std::move(psi);
    d.grad_psi_ = std::move(grad_psi);
    return d;
}

double ConvexDomain::psi(const Vec& x) const { return psi_(x); }

Vec ConvexDomain::grad_psi(const Vec& x) const { return grad_psi_(x); }

Classification ConvexDomain::classify(const Vec& x) const {
    const double p = psi_(x);
    const double tol = geometric_tolerance();
    if (p > tol) return {Location::Interior, p};
    if (p < -tol) return {Location::Exterior, p};
    return {Location::Boundary, p};
}

Vec ConvexDomain::inward_normal(const Vec& x) const {
    const Vec g = grad_psi_(x);
    const double norm = g.norm();
    if (norm < 1e-14) throw NumericalError("degenerate boundary: vanishing level-set gradient");
    return g / norm;
}

Vec ConvexDomain::closest_point(const Vec& x) const {
    switch (kind_) {
        case DomainKind::Ball: {
            const Vec r = x - center_;
            const double norm = r.norm();
            if (norm == 0.0) {
                Vec e = Vec::Zero(dim_);
                e[0] = radius_;
                return center_ + e;
            }
            return center_ + (radius_ / norm) * r;
        }
        case DomainKind::Ellipsoid: {
            // Closest point is a_i^2 y_i / (t + a_i^2) for the root t of sum (a_i y_i / (t + a_i^2))^2 = 1.
            const Vec& a = semi_axes_;
            const Vec a2 = a.cwiseProduct(a);
            const double a2min = a2.minCoeff();
            int kmin = 0;
            a2.minCoeff(&kmin);
            auto f = [&](double t) {
                double s = 0.0;
                for (int i = 0; i < dim_; ++i) {
                    const double q = a[i] * x[i] / (t + a2[i]);
                    s += q * q;
                }
                return s - 1.0;
            };
            if (x[kmin] == 0.0) {
                // Possible interior degenerate case: the closest point leaves the minor axis.
                double rest = 0.0;
                Vec cand = Vec::Zero(dim_);
                bool finite = true;
                for (int i = 0; i < dim_; ++i) {
                    if (i == kmin) continue;
                    const double den = a2[i] - a2min;
                    if (den <= 0.0) {
                        finite = finite && x[i] == 0.0;
                        continue;
                    }
                    cand[i] = a2[i] * x[i] / den;
                    rest += cand[i] * cand[i] / a2[i];
                }
                if (finite && rest <= 1.0) {
                    cand[kmin] = a[kmin] * std::sqrt(1.0 - rest);
                    return cand;
                }
            }
            double lo = -a2min;
            double hi = std::max(1.0, x.norm() * a.maxCoeff());
            while (f(hi) > 0.0) hi *= 2.0;
            for (int it = 0; it < 200 && hi - lo > 1e-16 * std::max(1.0, std::abs(hi)); ++it) {
                const double mid = 0.5 * (lo + hi);
                if (mid == lo || mid == hi) break;
                if (f(mid) > 0.0)
                    lo = mid;
                else
                    hi = mid;
            }
            const double t = 0.5 * (lo + hi);
            Vec out(dim_);
            for (int i = 0; i < dim_; ++i) out[i] = a2[i] * x[i] / (t + a2[i]);
            return out;
        }
        case DomainKind::Generic:
            return closest_point_iterative(x);
    }
    return x;
}

Vec ConvexDomain::closest_point_iterative(const Vec& x) const {
    const double tol = 1e-15 * bounding_radius_ * bounding_radius_;
    const bool inside = psi_(x) > 0.0;
    const double damping = inside ? 0.5 : 1.0;
    Vec y = project_to_level_set(psi_, grad_psi_, x, tol);
    for (int it = 0; it < 2000; ++it) {
        const Vec n = inward_normal(y);
        const Vec v = x - y;
        const Vec t = v - v.dot(n) * n;
        if (t.norm() <= 1e-15 * bounding_radius_) break;
        y = project_to_level_set(psi_, grad_psi_, y + damping * t, tol);
    }
    return y;
}

double ConvexDomain::signed_distance(const Vec& x) const {
    if (kind_ == DomainKind::Ball) return radius_ - (x - center_).norm();
    const double dist = (x - closest_point(x)).norm();
    return psi_(x) >= 0.0 ? dist : -dist;
}

double ConvexDomain::reflection_root(const Vec& x, const Vec& direction, double t_guess, double dk_max) const {
    if (kind_ != DomainKind::Generic) {
        // |x + t d|^2 in the scaled metric equals 1: smallest positive root of A t^2 + 2 B t + C.
        const Vec inv2 = semi_axes_.array().square().inverse().matrix();
        const Vec r = x - center_;
        const double qa = direction.cwiseProduct(direction).dot(inv2);
        const double qb = r.cwiseProduct(direction).dot(inv2);
        const double qc = r.cwiseProduct(r).dot(inv2) - 1.0;
        const double disc = qb * qb - qa * qc;
        if (qb >= 0.0 || disc < 0.0) throw StepRejection("reflection direction misses the domain");
        return qc / (-qb + std::sqrt(disc));
    }
    double lo = 0.0;
    double hi = std::max(t_guess, 1e-300);
    while (psi_(x + hi * direction) < 0.0) {
        lo = hi;
        hi *= 2.0;
        if (hi > 2.0 * dk_max || hi > 1e6 * bounding_radius_) throw StepRejection("no reflection within dk_max");
    }
    while (hi - lo > 1e-12 * std::max(1.0, hi)) {
        const double mid = 0.5 * (lo + hi);
        if (psi_(x + mid * direction) < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return hi;
}

Reflection ConvexDomain::project_and_reflect(const Vec& x, const Vec& direction, double dk_max) const {
    Reflection out;
    out.boundary_point = closest_point(x);
    if (classify(x).where != Location::Exterior) {
        out.corrected = x;
        out.dk = 0.0;
        return out;
    }
    const Vec n = inward_normal(out.boundary_point);
    const double dn = direction.dot(n);
    if (!(dn > 1e-12 * direction.norm())) throw NumericalError("reflection direction degenerate");
    const double dist = (x - out.boundary_point).norm();
    double t = reflection_root(x, direction, dist / dn, dk_max);
    Vec corrected = x + t * direction;
    for (int it = 0; it < 64 && classify(corrected).where == Location::Exterior; ++it) {
        t = std::nextafter(t, std::numeric_limits<double>::infinity()) * (1.0 + 1e-15) + 1e-300;
        corrected = x + t * direction;
    }
    if (classify(corrected).where == Location::Exterior) throw NumericalError("reflection failed to re-enter domain");
    if (t > dk_max) throw StepRejection("reflection increment exceeds dk_max");
    out.corrected = corrected;
    out.dk = t;
    return out;
}

Vec ConvexDomain::boundary_along_ray(const Vec& direction) const {
    const Vec u = direction.normalized();
    if (kind_ == DomainKind::Ball) return center_ + radius_ * u;
    double lo = 0.0;
    double hi = 2.0 * bounding_radius_;
    while (psi_(center_ + hi * u) > 0.0) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * bounding_radius_; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (psi_(center_ + mid * u) > 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return center_ + lo * u;
}

std::string ConvexDomain::describe() const {
    std::ostringstream os;
    switch (kind_) {
        case DomainKind::Ball:
            os << (dim_ == 2 ? "disk" : "ball") << "(R=" << radius_ << ")";
            break;
        case DomainKind::Ellipsoid:
            os << "ellipse(";
            for (int i = 0; i < dim_; ++i) os << (i ? "," : "") << semi_axes_[i];
            os << ")";
            break;
        case DomainKind::Generic:
            os << "generic(bounding radius " << bounding_radius_ << ")";
            break;
    }
    return os.str();
}

DomainCheck check_domain(const ConvexDomain& domain, int samples, std::uint64_t seed) {
    DomainCheck out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    const int d = domain.dim();
    std::vector<Vec> pts;
    pts.reserve(static_cast<std::size_t>(samples));
    out.min_grad_norm = std::numeric_limits<double>::infinity();
    for (int s = 0; s < samples; ++s) {
        Vec dir(d);
        for (int i = 0; i < d; ++i) dir[i] = normal(rng);
        if (dir.norm() == 0.0) dir[0] = 1.0;
        const Vec p = domain.boundary_along_ray(dir);
        out.min_grad_norm = std::min(out.min_grad_norm, domain.grad_psi(p).norm());
        pts.push_back(p);
    }
    out.gradient_ok = out.min_grad_norm > 1e-10;
    out.convexity_ok = true;
    std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
    for (int c = 0; c < samples; ++c) {
        const Vec mid = 0.5 * (pts[pick(rng)] + pts[pick(rng)]);
        if (domain.classify(mid).where == Location::Exterior) out.convexity_ok = false;
        ++out.chords_tested;
    }
    return out;
}

}  // namespace robin_homog
