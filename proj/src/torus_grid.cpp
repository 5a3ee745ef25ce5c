#include "robin_homog/torus_grid.hpp"

#include <cmath>
#include <string>

namespace robin_homog {

TorusGrid::TorusGrid(int dim, int n) : dim_(dim), n_(n) {
    if (dim < 1 || dim > kMaxDim) {
        throw PreconditionError("torus grid dimension must be in [1, " + std::to_string(kMaxDim) + "]");
    }
    if (n < 1) throw PreconditionError("torus grid resolution must be positive");
    size_ = 1;
    for (int a = dim - 1; a >= 0; --a) {
        strides_[a] = size_;
        size_ *= static_cast<std::size_t>(n);
    }
}

std::array<int, kMaxDim> TorusGrid::multi_index(std::size_t flat) const {
    std::array<int, kMaxDim> idx{};
    for (int a = 0; a < dim_; ++a) {
        idx[a] = static_cast<int>((flat / strides_[a]) % static_cast<std::size_t>(n_));
    }
    return idx;
}

std::size_t TorusGrid::flat_index(const std::array<int, kMaxDim>& idx) const {
    std::size_t flat = 0;
    for (int a = 0; a < dim_; ++a) {
        int k = idx[a] % n_;
        if (k < 0) k += n_;
        flat += static_cast<std::size_t>(k) * strides_[a];
    }
    return flat;
}

std::size_t TorusGrid::shifted(std::size_t flat, int axis, int offset) const {
    const auto s = strides_[axis];
    const int k = static_cast<int>((flat / s) % static_cast<std::size_t>(n_));
    int kk = (k + offset) % n_;
    if (kk < 0) kk += n_;
    return flat + (static_cast<std::size_t>(kk) - static_cast<std::size_t>(k)) * s;
}

Vec TorusGrid::point(std::size_t flat) const {
    const auto idx = multi_index(flat);
    Vec x(dim_);
    for (int a = 0; a < dim_; ++a) x[a] = static_cast<double>(idx[a]) / n_;
    return x;
}

Vec wrap_to_torus(const Vec& y) {
    Vec w(y.size());
    for (Eigen::Index a = 0; a < y.size(); ++a) {
        double v = y[a] - std::floor(y[a]);
        if (v >= 1.0) v -= 1.0;
        w[a] = v;
    }
    return w;
}

TorusField::TorusField(TorusGrid g, Eigen::VectorXd v) : grid(g), values(std::move(v)) {
    if (static_cast<std::size_t>(values.size()) != grid.size()) {
        throw PreconditionError("torus field size does not match its grid");
    }
}

double TorusField::mean() const { return values.mean(); }

double TorusField::interpolate(const Vec& y) const { return interpolate_nodal(grid, values.data(), y); }

Vec TorusVectorField::at(std::size_t node) const {
    Vec v(static_cast<int>(components.size()));
    for (std::size_t i = 0; i < components.size(); ++i) v[static_cast<int>(i)] = components[i][static_cast<Eigen::Index>(node)];
    return v;
}

double interpolate_nodal(const TorusGrid& grid, const double* values, const Vec& y) {
    const int d = grid.dim();
    const int n = grid.n();
    std::array<int, kMaxDim> base{};
    std::array<double, kMaxDim> frac{};
    for (int a = 0; a < d; ++a) {
        const double s = (y[a] - std::floor(y[a])) * n;
        int k = static_cast<int>(std::floor(s));
        frac[a] = s - k;
        base[a] = k;
    }
    double acc = 0.0;
    for (int corner = 0; corner < (1 << d); ++corner) {
        std::array<int, kMaxDim> idx{};
        double w = 1.0;
        for (int a = 0; a < d; ++a) {
            const bool up = (corner >> a) & 1;
            idx[a] = base[a] + (up ? 1 : 0);
            w *= up ? frac[a] : 1.0 - frac[a];
        }
        if (w != 0.0) acc += w * values[grid.flat_index(idx)];
    }
    return acc;
}

}  // namespace robin_homog
