#pragma once

#include "esopt/model.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace esopt {

/// Uniform axis with n nodes on [lo, hi].
struct Axis {
    double lo = 0.0;
    double hi = 1.0;
    int n = 3;

    double step() const { return (hi - lo) / (n - 1); }
    double node(int i) const { return i == n - 1 ? hi : lo + i * step(); }
    /// Index of the cell containing x (clamped) and the weight of its right node.
    std::pair<int, double> locate(double x) const;
};

/// Tensor grid over (s, q, nu1, t).
struct Grid4D {
    Axis s, q, nu, t;

    std::size_t size() const {
        return static_cast<std::size_t>(s.n) * q.n * nu.n * t.n;
    }
    std::size_t slice_size() const { return static_cast<std::size_t>(s.n) * q.n * nu.n; }
    /// Layout: s fastest, then nu, then q, then t.
    std::size_t index(int is, int iq, int iv, int it) const {
        return ((static_cast<std::size_t>(it) * q.n + iq) * nu.n + iv) * s.n + is;
    }

    /// Checks node counts and that the price window covers the regime means
    /// by three times twice the stationary standard deviation.
    void validate(const ModelParams& p) const;
};

/// 151 x 41 x 21 x 200 on s in [-100, 200] (the study's price window).
Grid4D default_grid(const ModelParams& p);

/// Scalar field on a Grid4D, e.g. the value function V(s, q, nu1, t).
struct Field4D {
    Grid4D grid;
    std::vector<double> data;

    Field4D() = default;
    explicit Field4D(const Grid4D& g) : grid(g), data(g.size(), 0.0) {}

    double& operator()(int is, int iq, int iv, int it) { return data[grid.index(is, iq, iv, it)]; }
    double operator()(int is, int iq, int iv, int it) const { return data[grid.index(is, iq, iv, it)]; }
    std::span<double> slice(int it) {
        return {data.data() + grid.index(0, 0, 0, it), grid.slice_size()};
    }
    std::span<const double> slice(int it) const {
        return {data.data() + grid.index(0, 0, 0, it), grid.slice_size()};
    }
    /// Trilinear interpolation in (s, q, nu1) on time slice it; arguments are clamped to the grid.
    double interpolate(double s, double q, double nu, int it) const;
};

using ValueField = Field4D;

enum class Mode : std::uint8_t { Buy = 0, Wait = 1, Sell = 2 };

const char* to_string(Mode m);

/// Pointwise optimal mode on every node; rates follow from rate_bounds(q).
struct PolicyField {
    Grid4D grid;
    std::vector<Mode> modes;

    PolicyField() = default;
    explicit PolicyField(const Grid4D& g) : grid(g), modes(g.size(), Mode::Wait) {}

    Mode operator()(int is, int iq, int iv, int it) const { return modes[grid.index(is, iq, iv, it)]; }
    Mode& operator()(int is, int iq, int iv, int it) { return modes[grid.index(is, iq, iv, it)]; }
    double rate(int is, int iq, int iv, int it, const ModelParams& p) const;
};

/// Rate realized by a mode at level q.
double mode_rate(Mode m, double q, const ModelParams& p);

}  // namespace esopt
