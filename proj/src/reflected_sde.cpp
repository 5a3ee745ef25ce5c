#include "robin_homog/reflected_sde.hpp"

#include "binary_io.hpp"
#include "parallel.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

namespace robin_homog {

namespace {

constexpr char kEnsembleMagic[8] = {'R', 'H', 'E', 'N', 'S', '0', '0', '1'};

struct PathAbort {};

std::mt19937_64 path_rng(std::uint64_t seed, std::uint64_t path) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32)};
    return std::mt19937_64(seq);
}

/// Uniform on (0, 1].
double open_uniform(std::mt19937_64& rng) {
    return 1.0 - std::generate_canonical<double, 53>(rng);
}

}  // namespace

ReflectionScheme parse_reflection_scheme(const std::string& name) {
    if (name == "projection") return ReflectionScheme::Projection;
    if (name == "bridge") return ReflectionScheme::Bridge;
    throw PreconditionError("unknown reflection scheme '" + name + "' (expected projection or bridge)");
}

std::string to_string(ReflectionScheme scheme) {
    return scheme == ReflectionScheme::Projection ? "projection" : "bridge";
}

std::size_t SimConfig::steps() const {
    if (!(dt > 0.0) || !(T > 0.0)) throw PreconditionError("dt and T must be positive");
    const double ratio = T / dt;
    const auto n = static_cast<std::size_t>(std::llround(ratio));
    if (n == 0 || std::abs(ratio - static_cast<double>(n)) > 1e-9 * ratio) {
        std::ostringstream msg;
        msg << "horizon T = " << T << " is not an integer multiple of dt = " << dt;
        throw PreconditionError(msg.str());
    }
    return n;
}

void SimConfig::validate(const ConvexDomain& domain) const {
    if (!(epsilon > 0.0)) throw PreconditionError("epsilon must be positive");
    if (dt > dt_cell * epsilon * epsilon * (1.0 + 1e-12)) {
        std::ostringstream msg;
        msg << "dt = " << dt << " does not resolve the fast scale: need dt <= " << dt_cell << " * epsilon^2 = "
            << dt_cell * epsilon * epsilon;
        throw PreconditionError(msg.str());
    }
    if (n_paths == 0) throw PreconditionError("n_paths must be positive");
    if (record_stride < 1) throw PreconditionError("record stride must be at least 1");
    if (steps() % static_cast<std::size_t>(record_stride) != 0) {
        throw PreconditionError("record stride must divide the number of steps");
    }
    if (!(dk_max > 0.0)) throw PreconditionError("dk_max must be positive");
    if (max_halvings < 0) throw PreconditionError("max_halvings must be nonnegative");
    if (x0.size() != domain.dim()) throw PreconditionError("x0 has the wrong dimension for the domain");
    if (!domain.contains(x0)) throw PreconditionError("x0 lies outside the closed domain");
}

Mat symmetric_sqrt(const Mat& a) {
    const auto d = a.rows();
    if (d == 1) {
        Mat out(1, 1);
        out(0, 0) = std::sqrt(a(0, 0));
        return out;
    }
    if (d == 2) {
        const double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
        if (det > 0.0) {
            const double s = std::sqrt(det);
            const double t = std::sqrt(a(0, 0) + a(1, 1) + 2.0 * s);
            Mat out = a;
            out(0, 0) += s;
            out(1, 1) += s;
            return out / t;
        }
    }
    Eigen::SelfAdjointEigenSolver<Mat> eig(a);
    return eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
           eig.eigenvectors().transpose();
}

Mat small_spd_inverse(const Mat& a) {
    switch (a.rows()) {
    case 1:
        return Mat::Constant(1, 1, 1.0 / a(0, 0));
    case 2:
        return Eigen::Matrix2d(a).inverse();
    case 3:
        return Eigen::Matrix3d(a).inverse();
    default:
        return a.ldlt().solve(Mat::Identity(a.rows(), a.cols()));
    }
}

double bridge_band_width(const PeriodicCoefficients& coeffs, const Vec& x, double dt, double epsilon) {
    const Vec y = x / epsilon;
    const double trace = coeffs.A(y).trace();
    const double drift = coeffs.drift_tilde(y).norm() / epsilon;
    return 6.0 * std::sqrt(trace * dt) + drift * dt;
}

StepResult step_oblique(const PeriodicCoefficients& coeffs, const ConvexDomain& domain, const Vec& state, double dt,
                        double epsilon, const StepNoise& noise, ReflectionScheme scheme, double dk_max) {
    const Vec y = state / epsilon;
    const Mat a = coeffs.A(y);
    const Vec mu = coeffs.drift_tilde(y) / epsilon;
    StepResult out;
    out.a_start = a;
    out.dM = symmetric_sqrt(a) * noise.xi * std::sqrt(dt);
    Vec next = state + mu * dt + out.dM;
    double multiplier = 0.0;

    if (scheme == ReflectionScheme::Bridge) {
        const double dist = domain.signed_distance(state);
        const double band = 6.0 * std::sqrt(a.trace() * dt) + mu.norm() * dt;
        if (dist < band) {
            const Vec xb = domain.closest_point(state);
            const Vec n = domain.inward_normal(xb);
            const Vec gamma = coeffs.A(xb / epsilon) * n;
            const double z = n.dot(mu * dt + out.dM);
            const double s2 = n.dot(a * n) * dt;
            const double u = std::clamp(noise.uniform, std::numeric_limits<double>::min(), 1.0);
            const double minimum = 0.5 * (z - std::sqrt(z * z - 2.0 * s2 * std::log(u)));
            const double push = std::max(0.0, -dist - minimum);
            if (push > 0.0) {
                const double ell = push / n.dot(gamma);
                if (2.0 * ell > dk_max) throw StepRejection("bridge local-time increment exceeds dk_max");
                next += ell * gamma;
                multiplier += ell;
                out.contact = xb;
                out.dK_weighted += 2.0 * ell * (coeffs.c ? coeffs.c(xb / epsilon) : 0.0);
            }
        }
    }

    if (domain.classify(next).where == Location::Exterior) {
        const Vec xb = domain.closest_point(next);
        const Vec gamma = coeffs.A(xb / epsilon) * domain.inward_normal(xb);
        const Reflection r = domain.project_and_reflect(next, gamma, 0.5 * dk_max);
        next = r.corrected;
        multiplier += r.dk;
        out.contact = r.boundary_point;
        out.dK_weighted += 2.0 * r.dk * (coeffs.c ? coeffs.c(xb / epsilon) : 0.0);
    }

    out.state = next;
    out.dK = 2.0 * multiplier;
    out.boundary = out.dK > 0.0;
    return out;
}

int resolve_thread_count(int requested) {
    int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char* env = std::getenv("ROBIN_HOMOG_THREADS")) {
        const int cap = std::atoi(env);
        if (cap > 0) n = std::min(n, cap);
    }
    return n;
}

namespace {

struct PathContext {
    const PeriodicCoefficients& coeffs;
    const ConvexDomain& domain;
    const SimConfig& cfg;
    std::mt19937_64& rng;
    std::normal_distribution<double>& normal;
};

StepResult advance(const PathContext& ctx, const Vec& x, double h, const Vec& dW, double uniform, int depth) {
    const int d = static_cast<int>(x.size());
    try {
        StepNoise noise{dW / std::sqrt(h), uniform};
        return step_oblique(ctx.coeffs, ctx.domain, x, h, ctx.cfg.epsilon, noise, ctx.cfg.scheme, ctx.cfg.dk_max);
    } catch (const StepRejection&) {
        if (depth >= ctx.cfg.max_halvings) throw PathAbort{};
    }
    // Brownian bridge split of the increment into two halves.
    Vec eta(d);
    for (int i = 0; i < d; ++i) eta[i] = ctx.normal(ctx.rng);
    const Vec dW1 = 0.5 * dW + 0.5 * std::sqrt(h) * eta;
    const Vec dW2 = dW - dW1;
    const double u1 = open_uniform(ctx.rng);
    const double u2 = open_uniform(ctx.rng);
    StepResult first = advance(ctx, x, 0.5 * h, dW1, u1, depth + 1);
    StepResult second = advance(ctx, first.state, 0.5 * h, dW2, u2, depth + 1);
    second.a_start = first.a_start;
    second.dM += first.dM;
    second.dK += first.dK;
    second.dK_weighted += first.dK_weighted;
    second.boundary = second.boundary || first.boundary;
    if (second.contact.size() == 0) second.contact = first.contact;
    return second;
}

}  // namespace

ReflectedPathEnsemble simulate_paths(const PeriodicCoefficients& coeffs, const ConvexDomain& domain,
                                     const SimConfig& cfg) {
    cfg.validate(domain);
    if (coeffs.dim != domain.dim()) throw PreconditionError("coefficient and domain dimensions differ");
    ReflectedPathEnsemble ens;
    const int d = domain.dim();
    ens.dim = d;
    ens.epsilon = cfg.epsilon;
    ens.dt = cfg.dt;
    ens.T = cfg.T;
    ens.steps = cfg.steps();
    ens.n_paths = cfg.n_paths;
    ens.record_stride = cfg.record_stride;
    ens.n_observables = cfg.volume_observables.size();
    const std::uint64_t slabs = ens.slabs();
    const std::uint64_t np = ens.n_paths;
    const auto ud = static_cast<std::uint64_t>(d);
    ens.states.assign(np * (slabs + 1) * ud, 0.0);
    ens.dM.assign(np * slabs * ud, 0.0);
    ens.dK.assign(np * slabs, 0.0);
    ens.dK_weighted.assign(np * slabs, 0.0);
    ens.a_inv_time.assign(np * slabs * ud * ud, 0.0);
    ens.boundary_flags.assign(np * slabs, 0);
    ens.aborted.assign(np, 0);
    ens.observables.assign(np * ens.n_observables, 0.0);
    if (cfg.record_events) ens.events.assign(np, {});

    const double dt = cfg.dt;
    const double sqrt_dt = std::sqrt(dt);
    const auto stride = static_cast<std::uint64_t>(cfg.record_stride);

    detail::parallel_for(np, resolve_thread_count(cfg.threads), [&](std::size_t p) {
        auto rng = path_rng(cfg.seed, p);
        std::normal_distribution<double> normal;
        const PathContext ctx{coeffs, domain, cfg, rng, normal};
        Vec x = cfg.x0;
        auto put_state = [&](std::uint64_t k) {
            for (int i = 0; i < d; ++i) ens.states[(p * (slabs + 1) + k) * ud + static_cast<std::uint64_t>(i)] = x[i];
        };
        put_state(0);
        Vec xi(d);
        std::uint64_t k = 0;
        try {
            for (; k < slabs; ++k) {
                Vec dm = Vec::Zero(d);
                Mat a_inv = Mat::Zero(d, d);
                double dk = 0.0;
                double dkw = 0.0;
                bool flag = false;
                for (std::uint64_t s = 0; s < stride; ++s) {
                    const Vec y = x / cfg.epsilon;
                    for (std::size_t o = 0; o < cfg.volume_observables.size(); ++o) {
                        ens.observables[p * ens.n_observables + o] += cfg.volume_observables[o](y) * dt;
                    }
                    for (int i = 0; i < d; ++i) xi[i] = normal(rng);
                    const double u = open_uniform(rng);
                    const StepResult r = advance(ctx, x, dt, xi * sqrt_dt, u, 0);
                    a_inv += small_spd_inverse(r.a_start) * dt;
                    if (!r.state.allFinite()) {
                        std::ostringstream msg;
                        msg << "non-finite state on path " << p << " at step " << k * stride + s;
                        throw NumericalError(msg.str());
                    }
                    if (cfg.record_events && r.dK > 0.0) {
                        ens.events[p].push_back({k * stride + s, r.contact, r.dK});
                    }
                    x = r.state;
                    dm += r.dM;
                    dk += r.dK;
                    dkw += r.dK_weighted;
                    flag = flag || r.boundary;
                }
                for (int i = 0; i < d; ++i) ens.dM[(p * slabs + k) * ud + static_cast<std::uint64_t>(i)] = dm[i];
                for (int i = 0; i < d; ++i) {
                    for (int j = 0; j < d; ++j) {
                        ens.a_inv_time[((p * slabs + k) * ud + static_cast<std::uint64_t>(i)) * ud +
                                       static_cast<std::uint64_t>(j)] = a_inv(i, j);
                    }
                }
                ens.dK[p * slabs + k] = dk;
                ens.dK_weighted[p * slabs + k] = dkw;
                ens.boundary_flags[p * slabs + k] = flag ? 1 : 0;
                put_state(k + 1);
            }
        } catch (const PathAbort&) {
            ens.aborted[p] = 1;
            for (std::uint64_t j = k + 1; j <= slabs; ++j) put_state(j);
        }
    });
    return ens;
}

Vec ReflectedPathEnsemble::state(std::uint64_t path, std::uint64_t slab) const {
    Vec x(dim);
    const auto base = (path * (slabs() + 1) + slab) * static_cast<std::uint64_t>(dim);
    for (int i = 0; i < dim; ++i) x[i] = states[base + static_cast<std::uint64_t>(i)];
    return x;
}

Vec ReflectedPathEnsemble::martingale_increment(std::uint64_t path, std::uint64_t slab) const {
    Vec v(dim);
    const auto base = (path * slabs() + slab) * static_cast<std::uint64_t>(dim);
    for (int i = 0; i < dim; ++i) v[i] = dM[base + static_cast<std::uint64_t>(i)];
    return v;
}

Mat ReflectedPathEnsemble::inverse_diffusion_time(std::uint64_t path, std::uint64_t slab) const {
    Mat m(dim, dim);
    const auto ud = static_cast<std::uint64_t>(dim);
    const auto base = (path * slabs() + slab) * ud * ud;
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) m(i, j) = a_inv_time[base + static_cast<std::uint64_t>(i) * ud + static_cast<std::uint64_t>(j)];
    }
    return m;
}

double ReflectedPathEnsemble::local_time(std::uint64_t path) const {
    double k = 0.0;
    for (std::uint64_t s = 0; s < slabs(); ++s) k += dK[path * slabs() + s];
    return k;
}

double ReflectedPathEnsemble::weighted_local_time(std::uint64_t path) const {
    double k = 0.0;
    for (std::uint64_t s = 0; s < slabs(); ++s) k += dK_weighted[path * slabs() + s];
    return k;
}

std::uint64_t ReflectedPathEnsemble::aborted_count() const {
    std::uint64_t n = 0;
    for (auto a : aborted) n += a;
    return n;
}

void ReflectedPathEnsemble::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw PreconditionError("cannot open ensemble file for writing: " + path);
    os.write(kEnsembleMagic, sizeof(kEnsembleMagic));
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(dim));
    detail::write_le<std::uint64_t>(os, steps);
    detail::write_le<std::uint64_t>(os, n_paths);
    detail::write_le<double>(os, dt);
    detail::write_le<double>(os, epsilon);
    detail::write_le<double>(os, T);
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(record_stride));
    detail::write_le<std::uint64_t>(os, n_observables);
    detail::write_le<std::uint8_t>(os, events.empty() ? 0 : 1);
    const std::uint64_t s = slabs();
    const auto ud = static_cast<std::uint64_t>(dim);
    for (std::uint64_t p = 0; p < n_paths; ++p) {
        detail::write_le<std::uint8_t>(os, aborted[p]);
        detail::write_array_le(os, states.data() + p * (s + 1) * ud, (s + 1) * ud);
        detail::write_array_le(os, dM.data() + p * s * ud, s * ud);
        detail::write_array_le(os, dK.data() + p * s, s);
        detail::write_array_le(os, dK_weighted.data() + p * s, s);
        detail::write_array_le(os, a_inv_time.data() + p * s * ud * ud, s * ud * ud);
        detail::write_array_le(os, boundary_flags.data() + p * s, s);
        detail::write_array_le(os, observables.data() + p * n_observables, n_observables);
        if (!events.empty()) {
            detail::write_le<std::uint64_t>(os, events[p].size());
            for (const auto& e : events[p]) {
                detail::write_le<std::uint64_t>(os, e.step);
                for (int i = 0; i < dim; ++i) detail::write_le<double>(os, e.position[i]);
                detail::write_le<double>(os, e.dK);
            }
        }
    }
    if (!os) throw NumericalError("failed writing ensemble file: " + path);
}

ReflectedPathEnsemble ReflectedPathEnsemble::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw PreconditionError("cannot open ensemble file: " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || !std::equal(magic, magic + 8, kEnsembleMagic)) throw PreconditionError("not an ensemble file: " + path);
    ReflectedPathEnsemble e;
    e.dim = static_cast<int>(detail::read_le<std::uint32_t>(is));
    e.steps = detail::read_le<std::uint64_t>(is);
    e.n_paths = detail::read_le<std::uint64_t>(is);
    e.dt = detail::read_le<double>(is);
    e.epsilon = detail::read_le<double>(is);
    e.T = detail::read_le<double>(is);
    e.record_stride = static_cast<int>(detail::read_le<std::uint32_t>(is));
    e.n_observables = detail::read_le<std::uint64_t>(is);
    const bool has_events = detail::read_le<std::uint8_t>(is) != 0;
    if (e.dim < 1 || e.dim > kMaxDim || e.record_stride < 1 || e.steps % static_cast<std::uint64_t>(e.record_stride)) {
        throw PreconditionError("corrupt ensemble header: " + path);
    }
    const std::uint64_t s = e.slabs();
    const auto ud = static_cast<std::uint64_t>(e.dim);
    const std::uint64_t np = e.n_paths;
    e.states.resize(np * (s + 1) * ud);
    e.dM.resize(np * s * ud);
    e.dK.resize(np * s);
    e.dK_weighted.resize(np * s);
    e.a_inv_time.resize(np * s * ud * ud);
    e.boundary_flags.resize(np * s);
    e.aborted.resize(np);
    e.observables.resize(np * e.n_observables);
    if (has_events) e.events.resize(np);
    for (std::uint64_t p = 0; p < np; ++p) {
        e.aborted[p] = detail::read_le<std::uint8_t>(is);
        detail::read_array_le(is, e.states.data() + p * (s + 1) * ud, (s + 1) * ud);
        detail::read_array_le(is, e.dM.data() + p * s * ud, s * ud);
        detail::read_array_le(is, e.dK.data() + p * s, s);
        detail::read_array_le(is, e.dK_weighted.data() + p * s, s);
        detail::read_array_le(is, e.a_inv_time.data() + p * s * ud * ud, s * ud * ud);
        detail::read_array_le(is, e.boundary_flags.data() + p * s, s);
        detail::read_array_le(is, e.observables.data() + p * e.n_observables, e.n_observables);
        if (has_events) {
            const auto count = detail::read_le<std::uint64_t>(is);
            e.events[p].resize(count);
            for (auto& ev : e.events[p]) {
                ev.step = detail::read_le<std::uint64_t>(is);
                ev.position.resize(e.dim);
                for (int i = 0; i < e.dim; ++i) ev.position[i] = detail::read_le<double>(is);
                ev.dK = detail::read_le<double>(is);
            }
        }
    }
    return e;
}

LocalTimeStats local_time_stats(const ReflectedPathEnsemble& ensemble) {
    LocalTimeStats out;
    double sum = 0.0;
    double sum2 = 0.0;
    std::uint64_t flagged = 0;
    const std::uint64_t s = ensemble.slabs();
    for (std::uint64_t p = 0; p < ensemble.n_paths; ++p) {
        if (ensemble.aborted[p]) continue;
        const double k = ensemble.local_time(p);
        sum += k;
        sum2 += k * k;
        for (std::uint64_t j = 0; j < s; ++j) flagged += ensemble.boundary_flags[p * s + j];
        ++out.paths;
    }
    if (out.paths == 0) return out;
    const double n = static_cast<double>(out.paths);
    out.mean = sum / n;
    out.second_moment = sum2 / n;
    out.variance = out.paths > 1 ? (sum2 - n * out.mean * out.mean) / (n - 1.0) : 0.0;
    out.boundary_fraction = static_cast<double>(flagged) / (n * static_cast<double>(s));
    return out;
}

}  // namespace robin_homog
