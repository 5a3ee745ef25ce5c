#pragma once

#include "robin_homog/coefficients.hpp"
#include "robin_homog/domain.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace robin_homog {

enum class ReflectionScheme {
    /// Euler step, then oblique projection back along the conormal.
    Projection,
    /// Projection plus the Brownian-bridge minimum of the normal coordinate near the boundary.
    Bridge,
};

ReflectionScheme parse_reflection_scheme(const std::string& name);
std::string to_string(ReflectionScheme scheme);

/// Local-time increments dK are recorded so that the reflection push over a step
/// is (1/2) gamma dK with gamma = A(x_b / eps) n(x_b); then int c(X/eps) Y dK is
/// the Robin term of 1/2 d_nu u + c u = 0.
struct SimConfig {
    double epsilon = 1.0;
    double dt = 1e-3;
    double T = 1.0;
    std::size_t n_paths = 1000;
    Vec x0;
    std::uint64_t seed = 1;
    double dk_max = 1.0;
    double dt_cell = 0.05;
    int record_stride = 1;
    bool record_events = false;
    ReflectionScheme scheme = ReflectionScheme::Bridge;
    /// 0 picks the hardware concurrency, capped by ROBIN_HOMOG_THREADS when set.
    int threads = 0;
    int max_halvings = 8;
    /// Functions psi on the torus whose time integrals int psi(X/eps) dr are recorded.
    std::vector<TorusScalarFn> volume_observables;

    std::size_t steps() const;
    std::size_t slabs() const { return steps() / static_cast<std::size_t>(record_stride); }
    /// Throws PreconditionError if the configuration is inconsistent with the domain.
    void validate(const ConvexDomain& domain) const;
};

struct StepNoise {
    Vec xi;
    /// Uniform in (0, 1] driving the bridge minimum; 1 reduces Bridge to Projection.
    double uniform = 1.0;
};

struct StepResult {
    Vec state;
    Vec dM;
    double dK = 0.0;
    /// sum of c(x_contact / eps) dK over the corrections of this step.
    double dK_weighted = 0.0;
    bool boundary = false;
    /// Boundary point of the last correction; empty when dK = 0.
    Vec contact;
    /// A(state / eps) at the start of the step.
    Mat a_start;
};

/// Inverse of a symmetric positive definite matrix of dimension at most 3.
Mat small_spd_inverse(const Mat& a);

/// Width of the band around the boundary in which the bridge correction is active.
double bridge_band_width(const PeriodicCoefficients& coeffs, const Vec& x, double dt, double epsilon);

/// One Euler step with oblique reflection. Deterministic given `noise`.
StepResult step_oblique(const PeriodicCoefficients& coeffs, const ConvexDomain& domain, const Vec& state, double dt,
                        double epsilon, const StepNoise& noise, ReflectionScheme scheme = ReflectionScheme::Bridge,
                        double dk_max = std::numeric_limits<double>::infinity());

/// Symmetric square root of a symmetric positive definite matrix.
Mat symmetric_sqrt(const Mat& a);

/// One step with dK > 0; `position` is the boundary point where it accrued.
struct BoundaryEvent {
    std::uint64_t step = 0;
    Vec position;
    double dK = 0.0;
};

/// Paths recorded every `record_stride` steps. Per-slab channels are sums over the
/// steps of the slab; slab k covers steps [k * stride, (k + 1) * stride).
struct ReflectedPathEnsemble {
    int dim = 2;
    double epsilon = 1.0;
    double dt = 1e-3;
    double T = 0.0;
    std::uint64_t steps = 0;
    std::uint64_t n_paths = 0;
    int record_stride = 1;
    std::uint64_t n_observables = 0;

    std::vector<double> states;        // n_paths x (slabs + 1) x d
    std::vector<double> dM;            // n_paths x slabs x d
    std::vector<double> dK;            // n_paths x slabs
    std::vector<double> dK_weighted;   // n_paths x slabs
    std::vector<double> a_inv_time;    // n_paths x slabs x d x d, int A(X/eps)^{-1} dr
    std::vector<std::uint8_t> boundary_flags;  // n_paths x slabs
    std::vector<std::uint8_t> aborted;         // n_paths
    std::vector<double> observables;   // n_paths x n_observables
    std::vector<std::vector<BoundaryEvent>> events;  // per path, empty unless recorded

    std::uint64_t slabs() const { return steps / static_cast<std::uint64_t>(record_stride); }
    double slab_dt() const { return dt * record_stride; }
    double time(std::uint64_t slab) const { return static_cast<double>(slab) * slab_dt(); }

    Vec state(std::uint64_t path, std::uint64_t slab) const;
    Vec martingale_increment(std::uint64_t path, std::uint64_t slab) const;
    double local_time_increment(std::uint64_t path, std::uint64_t slab) const {
        return dK[path * slabs() + slab];
    }
    double weighted_local_time_increment(std::uint64_t path, std::uint64_t slab) const {
        return dK_weighted[path * slabs() + slab];
    }
    Mat inverse_diffusion_time(std::uint64_t path, std::uint64_t slab) const;
    double local_time(std::uint64_t path) const;
    double weighted_local_time(std::uint64_t path) const;
    double observable(std::uint64_t path, std::uint64_t index) const {
        return observables[path * n_observables + index];
    }
    std::uint64_t aborted_count() const;

    /// Little-endian binary dump; see the README for the layout.
    void save(const std::string& path) const;
    static ReflectedPathEnsemble load(const std::string& path);
};

ReflectedPathEnsemble simulate_paths(const PeriodicCoefficients& coeffs, const ConvexDomain& domain,
                                     const SimConfig& cfg);

struct LocalTimeStats {
    double mean = 0.0;
    double variance = 0.0;
    double second_moment = 0.0;
    double boundary_fraction = 0.0;
    std::uint64_t paths = 0;
};

/// Ensemble statistics of K_T over non-aborted paths.
LocalTimeStats local_time_stats(const ReflectedPathEnsemble& ensemble);

/// Worker count used for `requested` (0 = automatic), honoring ROBIN_HOMOG_THREADS.
int resolve_thread_count(int requested);

}  // namespace robin_homog
