#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <string>

namespace robin_homog {

// Spatial dimension is runtime (2 or 3) but bounded, so small vectors and
// matrices never touch the heap inside the path simulation loop.
inline constexpr int kMaxDim = 3;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

/// Function on the unit torus (arguments are taken modulo 1 by the callee).
using TorusScalarFn = std::function<double(const Vec&)>;
using TorusVectorFn = std::function<Vec(const Vec&)>;
using TorusMatrixFn = std::function<Mat(const Vec&)>;

/// Raised when an input violates a documented precondition. The CLI maps it to exit code 2.
class PreconditionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical procedure fails (non-convergence, instability). Exit code 1.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Oblique reflection could not find a correction within the configured cap.
class StepRejection : public NumericalError {
public:
    using NumericalError::NumericalError;
};

inline Vec zero_vec(int dim) { return Vec::Zero(dim); }

}  // namespace robin_homog
