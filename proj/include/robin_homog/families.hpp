#pragma once

// Built-in coefficient families selectable by name from the CLI config.
//
// Coefficient families (y is the torus variable, s(t) = sin(2 pi t)):
//   identity                      A = I, b = 0
//   layered(a)                    A = diag(1/(1 + a s(y1)), 1, ...), b = 0, |a| < 1
//   admissible(a)                 A = I, b = 1/2 grad m / m with m = 1 + a s(y1), so L* m = 0
//   checkerboard-smooth(a)        A = (1 + a s(y1) s(y2)) I, b = 0, |a| < 1
//   constant-drift(v)             A = I, b = (v, 0, ...); not centered unless v = 0
//   diagonal(a1,a2[,a3])          A = diag(a1, a2, ...), b = 0
// Robin families:
//   zero                          c = 0
//   constant(v)                   c = v <= 0
//   oscillating(mean,amp)         c = mean + amp s(y1), requires mean + |amp| <= 0
// Drivers f(x, y, z):
//   zero                          f = 0
//   decay(r)                      f = -r y
//   decay-gradient(r,k)           f = -r y + k z1
//   saturating(r,k)               f = -r y + k tanh(|z|)
// Terminal data g(x):
//   one | constant(v) | bowl      bowl is 1 - |x|^2 / 2

#include "robin_homog/coefficients.hpp"

#include <string>
#include <vector>

namespace robin_homog {

/// "name(1, 2.5)" -> {"name", {1, 2.5}}; a bare "name" has no arguments.
struct FamilySpec {
    std::string name;
    std::vector<double> args;
};

FamilySpec parse_family_spec(const std::string& text);

PeriodicCoefficients identity_family(int dim);
PeriodicCoefficients layered_family(int dim, double amplitude);
PeriodicCoefficients admissible_family(int dim, double amplitude);
PeriodicCoefficients checkerboard_family(int dim, double amplitude);
PeriodicCoefficients constant_drift_family(int dim, double velocity);
PeriodicCoefficients diagonal_family(const std::vector<double>& diag);
PeriodicCoefficients constant_matrix_family(const Mat& a);

/// Builds the coefficient family named by `spec`; c is left at zero.
PeriodicCoefficients make_coefficients(const std::string& spec, int dim);

/// Installs the Robin coefficient named by `spec` into `coeffs` (sets c and alpha).
void set_robin(PeriodicCoefficients& coeffs, const std::string& spec);

/// m for the admissible family (exposed for tests and the invariant-measure oracle).
SmoothTorusFunction admissible_density(int dim, double amplitude);

Driver make_driver(const std::string& f_spec, const std::string& g_spec);

}  // namespace robin_homog
