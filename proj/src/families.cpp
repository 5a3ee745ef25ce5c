#include "robin_homog/families.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace robin_homog {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

void require_args(const FamilySpec& spec, std::size_t lo, std::size_t hi) {
    if (spec.args.size() < lo || spec.args.size() > hi) {
        std::ostringstream msg;
        msg << "family '" << spec.name << "' takes " << lo;
        if (hi != lo) msg << ".." << hi;
        msg << " argument(s), got " << spec.args.size();
        throw PreconditionError(msg.str());
    }
}

TorusVectorFn zero_vector_fn(int dim) {
    return [dim](const Vec&) -> Vec { return Vec::Zero(dim); };
}

}  // namespace

FamilySpec parse_family_spec(const std::string& text) {
    FamilySpec spec;
    const auto t = trim(text);
    const auto open = t.find('(');
    if (open == std::string::npos) {
        spec.name = t;
        return spec;
    }
    const auto close = t.rfind(')');
    if (close == std::string::npos || close < open) throw PreconditionError("malformed family spec: " + text);
    spec.name = trim(t.substr(0, open));
    std::stringstream inner(t.substr(open + 1, close - open - 1));
    std::string item;
    while (std::getline(inner, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        try {
            spec.args.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw PreconditionError("non-numeric argument '" + item + "' in family spec: " + text);
        }
    }
    return spec;
}

PeriodicCoefficients identity_family(int dim) {
    PeriodicCoefficients c;
    c.dim = dim;
    c.A = [dim](const Vec&) -> Mat { return Mat::Identity(dim, dim); };
    c.divA = zero_vector_fn(dim);
    c.b = zero_vector_fn(dim);
    c.c = [](const Vec&) { return 0.0; };
    c.lambda = 1.0;
    c.name = "identity";
    return c;
}

PeriodicCoefficients layered_family(int dim, double amplitude) {
    if (!(std::abs(amplitude) < 1.0)) throw PreconditionError("layered amplitude must satisfy |a| < 1");
    PeriodicCoefficients c = identity_family(dim);
    const double a = amplitude;
    c.A = [dim, a](const Vec& y) -> Mat {
        Mat m = Mat::Identity(dim, dim);
        m(0, 0) = 1.0 / (1.0 + a * std::sin(kTwoPi * y[0]));
        return m;
    };
    c.divA = [dim, a](const Vec& y) -> Vec {
        Vec v = Vec::Zero(dim);
        const double s = 1.0 + a * std::sin(kTwoPi * y[0]);
        v[0] = -kTwoPi * a * std::cos(kTwoPi * y[0]) / (s * s);
        return v;
    };
    c.lambda = std::max(1.0 / (1.0 - std::abs(a)), 1.0 + std::abs(a));
    std::ostringstream name;
    name << "layered(" << a << ")";
    c.name = name.str();
    return c;
}

SmoothTorusFunction admissible_density(int dim, double amplitude) {
    const double a = amplitude;
    SmoothTorusFunction m;
    m.value = [a](const Vec& y) { return 1.0 + a * std::sin(kTwoPi * y[0]); };
    m.gradient = [dim, a](const Vec& y) -> Vec {
        Vec g = Vec::Zero(dim);
        g[0] = kTwoPi * a * std::cos(kTwoPi * y[0]);
        return g;
    };
    return m;
}

PeriodicCoefficients admissible_family(int dim, double amplitude) {
    if (!(std::abs(amplitude) < 1.0)) throw PreconditionError("admissible amplitude must satisfy |a| < 1");
    PeriodicCoefficients c = identity_family(dim);
    c.b = make_admissible_drift(dim, c.A, admissible_density(dim, amplitude));
    std::ostringstream name;
    name << "admissible(" << amplitude << ")";
    c.name = name.str();
    return c;
}

PeriodicCoefficients checkerboard_family(int dim, double amplitude) {
    if (dim < 2) throw PreconditionError("checkerboard family needs dim >= 2");
    if (!(std::abs(amplitude) < 1.0)) throw PreconditionError("checkerboard amplitude must satisfy |a| < 1");
    PeriodicCoefficients c = identity_family(dim);
    const double a = amplitude;
    c.A = [dim, a](const Vec& y) -> Mat {
        const double s = 1.0 + a * std::sin(kTwoPi * y[0]) * std::sin(kTwoPi * y[1]);
        return s * Mat::Identity(dim, dim);
    };
    c.divA = [dim, a](const Vec& y) -> Vec {
        Vec v = Vec::Zero(dim);
        v[0] = kTwoPi * a * std::cos(kTwoPi * y[0]) * std::sin(kTwoPi * y[1]);
        v[1] = kTwoPi * a * std::sin(kTwoPi * y[0]) * std::cos(kTwoPi * y[1]);
        return v;
    };
    c.lambda = std::max(1.0 / (1.0 - std::abs(a)), 1.0 + std::abs(a));
    std::ostringstream name;
    name << "checkerboard-smooth(" << a << ")";
    c.name = name.str();
    return c;
}

PeriodicCoefficients constant_drift_family(int dim, double velocity) {
    PeriodicCoefficients c = identity_family(dim);
    c.b = [dim, velocity](const Vec&) -> Vec {
        Vec v = Vec::Zero(dim);
        v[0] = velocity;
        return v;
    };
    std::ostringstream name;
    name << "constant-drift(" << velocity << ")";
    c.name = name.str();
    return c;
}

PeriodicCoefficients constant_matrix_family(const Mat& a) {
    const int dim = static_cast<int>(a.rows());
    if (a.cols() != a.rows()) throw PreconditionError("constant diffusion matrix must be square");
    Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (a + a.transpose()));
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0)) throw PreconditionError("constant diffusion matrix must be positive definite");
    PeriodicCoefficients c = identity_family(dim);
    c.A = [a](const Vec&) -> Mat { return a; };
    c.lambda = std::max({1.0, hi, 1.0 / lo});
    c.name = "constant-matrix";
    return c;
}

PeriodicCoefficients diagonal_family(const std::vector<double>& diag) {
    const int dim = static_cast<int>(diag.size());
    Mat a = Mat::Zero(dim, dim);
    for (int i = 0; i < dim; ++i) a(i, i) = diag[static_cast<std::size_t>(i)];
    // validate() must be able to report a non-elliptic diagonal, so no positivity check here.
    PeriodicCoefficients c = identity_family(dim);
    c.A = [a](const Vec&) -> Mat { return a; };
    double lam = 1.0;
    for (double v : diag) {
        if (v > 0) lam = std::max({lam, v, 1.0 / v});
    }
    c.lambda = lam;
    c.name = "diagonal";
    return c;
}

PeriodicCoefficients make_coefficients(const std::string& text, int dim) {
    const auto spec = parse_family_spec(text);
    if (spec.name == "identity") {
        require_args(spec, 0, 0);
        return identity_family(dim);
    }
    if (spec.name == "layered") {
        require_args(spec, 0, 1);
        return layered_family(dim, spec.args.empty() ? 0.5 : spec.args[0]);
    }
    if (spec.name == "admissible") {
        require_args(spec, 0, 1);
        return admissible_family(dim, spec.args.empty() ? 0.5 : spec.args[0]);
    }
    if (spec.name == "checkerboard-smooth") {
        require_args(spec, 0, 1);
        return checkerboard_family(dim, spec.args.empty() ? 0.5 : spec.args[0]);
    }
    if (spec.name == "constant-drift") {
        require_args(spec, 1, 1);
        return constant_drift_family(dim, spec.args[0]);
    }
    if (spec.name == "diagonal") {
        require_args(spec, static_cast<std::size_t>(dim), static_cast<std::size_t>(dim));
        return diagonal_family(spec.args);
    }
    throw PreconditionError("unknown coefficient family: " + spec.name);
}

void set_robin(PeriodicCoefficients& coeffs, const std::string& text) {
    const auto spec = parse_family_spec(text);
    if (spec.name == "zero") {
        require_args(spec, 0, 0);
        coeffs.c = [](const Vec&) { return 0.0; };
        coeffs.alpha = 0.0;
        return;
    }
    if (spec.name == "constant") {
        require_args(spec, 1, 1);
        const double v = spec.args[0];
        if (v > 0.0) throw PreconditionError("Robin coefficient must be nonpositive");
        coeffs.c = [v](const Vec&) { return v; };
        coeffs.alpha = -v;
        return;
    }
    if (spec.name == "oscillating") {
        require_args(spec, 2, 2);
        const double mean = spec.args[0];
        const double amp = spec.args[1];
        if (mean + std::abs(amp) > 0.0) throw PreconditionError("oscillating Robin coefficient must stay nonpositive");
        coeffs.c = [mean, amp](const Vec& y) { return mean + amp * std::sin(kTwoPi * y[0]); };
        coeffs.alpha = -(mean - std::abs(amp));
        return;
    }
    throw PreconditionError("unknown Robin family: " + spec.name);
}

Driver make_driver(const std::string& f_text, const std::string& g_text) {
    Driver d;
    const auto gs = parse_family_spec(g_text);
    if (gs.name == "one") {
        d.g = [](const Vec&) { return 1.0; };
        d.g_sup = 1.0;
    } else if (gs.name == "constant") {
        require_args(gs, 1, 1);
        const double v = gs.args[0];
        d.g = [v](const Vec&) { return v; };
        d.g_sup = std::abs(v);
    } else if (gs.name == "bowl") {
        d.g = [](const Vec& x) { return 1.0 - 0.5 * x.squaredNorm(); };
        // On domains inside the ball of radius 2 the bowl stays in [-1, 1].
        d.g_sup = 1.0;
    } else {
        throw PreconditionError("unknown terminal function: " + gs.name);
    }

    const auto fs = parse_family_spec(f_text);
    if (fs.name == "zero") {
        d.f = [](const Vec&, double, const Vec&) { return 0.0; };
    } else if (fs.name == "decay") {
        require_args(fs, 0, 1);
        const double r = fs.args.empty() ? 1.0 : fs.args[0];
        d.f = [r](const Vec&, double y, const Vec&) { return -r * y; };
        d.c1_bound = -r;
        d.f_sup = std::abs(r) * d.g_sup;
    } else if (fs.name == "decay-gradient") {
        require_args(fs, 2, 2);
        const double r = fs.args[0];
        const double k = fs.args[1];
        d.f = [r, k](const Vec&, double y, const Vec& z) { return -r * y + k * z[0]; };
        d.c1_bound = -r;
        d.c2 = std::abs(k);
        // Declared gradient range |Z| <= 2 g_sup for smooth data on the unit disk.
        d.f_sup = std::abs(r) * d.g_sup + std::abs(k) * 2.0 * d.g_sup;
    } else if (fs.name == "saturating") {
        require_args(fs, 2, 2);
        const double r = fs.args[0];
        const double k = fs.args[1];
        d.f = [r, k](const Vec&, double y, const Vec& z) { return -r * y + k * std::tanh(z.norm()); };
        d.c1_bound = -r;
        d.c2 = std::abs(k);
        d.f_sup = std::abs(r) * d.g_sup + std::abs(k);
    } else {
        throw PreconditionError("unknown driver: " + fs.name);
    }
    d.rotation_invariant = fs.name != "decay-gradient" || fs.args[1] == 0.0;
    d.name = f_text + " / " + g_text;
    return d;
}

}  // namespace robin_homog
