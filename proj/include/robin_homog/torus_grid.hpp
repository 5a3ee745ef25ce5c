#pragma once

#include "robin_homog/types.hpp"

#include <array>
#include <cstddef>
#include <vector>

namespace robin_homog {

/// Uniform periodic grid on [0,1)^d with nodes k/n.
class TorusGrid {
public:
    TorusGrid() = default;
    TorusGrid(int dim, int n);

    int dim() const { return dim_; }
    int n() const { return n_; }
    double spacing() const { return 1.0 / n_; }
    std::size_t size() const { return size_; }
    std::size_t stride(int axis) const { return strides_[axis]; }

    std::array<int, kMaxDim> multi_index(std::size_t flat) const;
    std::size_t flat_index(const std::array<int, kMaxDim>& idx) const;

    /// Flat index of the node shifted by `offset` along `axis`, wrapped periodically.
    std::size_t shifted(std::size_t flat, int axis, int offset) const;

    Vec point(std::size_t flat) const;

    bool operator==(const TorusGrid& other) const { return dim_ == other.dim_ && n_ == other.n_; }
    bool operator!=(const TorusGrid& other) const { return !(*this == other); }

private:
    int dim_ = 0;
    int n_ = 0;
    std::size_t size_ = 0;
    std::array<std::size_t, kMaxDim> strides_{};
};

/// Reduce a point of R^d to its representative in [0,1)^d.
Vec wrap_to_torus(const Vec& y);

/// Grid-sampled periodic scalar function.
struct TorusField {
    TorusGrid grid;
    Eigen::VectorXd values;

    TorusField() = default;
    TorusField(TorusGrid g, Eigen::VectorXd v);

    /// Quadrature mean, i.e. the periodic trapezoid rule.
    double mean() const;
    double min() const { return values.minCoeff(); }
    double max() const { return values.maxCoeff(); }

    /// Periodic multilinear interpolation at an arbitrary point.
    double interpolate(const Vec& y) const;
};

/// d grid-sampled scalar components.
struct TorusVectorField {
    TorusGrid grid;
    std::vector<Eigen::VectorXd> components;

    Vec at(std::size_t node) const;
};

/// Periodic multilinear interpolation of nodal data stored on `grid`.
double interpolate_nodal(const TorusGrid& grid, const double* values, const Vec& y);

}  // namespace robin_homog
