#pragma once

#include "esopt/grid.hpp"
#include "esopt/model.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <vector>

namespace esopt {

/// Optional change of the time variable before the polynomial basis is applied:
/// tau = -log(horizon - t + offset), which stretches the approach to the horizon.
struct TimeWarp {
    bool enabled = false;
    double horizon = 1.0;
    double offset = 0.0;

    double operator()(double t) const { return enabled ? -std::log(horizon - t + offset) : t; }
};

/// Tensor-product Chebyshev polynomial in (q, nu1, tau(t)) on a box.
class TensorPolynomial {
public:
    /// Value with gradient and Hessian in (q, nu1, t).
    struct Jet {
        double value = 0.0;
        std::array<double, 3> grad{};
        std::array<std::array<double, 3>, 3> hess{};
    };

    TensorPolynomial() = default;
    /// The box is given in (q, nu1, t); derivatives are returned with respect to t.
    TensorPolynomial(std::array<int, 3> degrees, std::array<double, 3> lo, std::array<double, 3> hi,
                     std::vector<double> coefficients, TimeWarp warp = {});

    double operator()(double q, double nu, double t) const;
    Jet jet(double q, double nu, double t) const;

    const std::array<int, 3>& degrees() const { return degrees_; }
    const std::array<double, 3>& lower() const { return lo_; }
    const std::array<double, 3>& upper() const { return hi_; }
    const std::vector<double>& coefficients() const { return coef_; }
    const TimeWarp& time_warp() const { return warp_; }
    std::size_t terms() const { return coef_.size(); }

    /// Evaluation clamps arguments into the box.
    static std::size_t term_count(std::array<int, 3> degrees) {
        return static_cast<std::size_t>(degrees[0] + 1) * (degrees[1] + 1) * (degrees[2] + 1);
    }
    /// Basis values of all terms at a point, in coefficient order.
    void basis(double q, double nu, double t, std::vector<double>& out) const;

private:
    std::array<int, 3> degrees_{};
    std::array<double, 3> lo_{}, hi_{};
    std::vector<double> coef_;
    TimeWarp warp_;
};

enum class BarrierStatus : std::uint8_t {
    Ok,
    BelowRange,   ///< switch lies below the price window
    AboveRange,   ///< switch lies above the price window
    NonMonotone,  ///< modes along s not of the form Buy* Wait* Sell*
    Merged,       ///< no waiting region: buy and sell levels coincide
};

const char* to_string(BarrierStatus s);

struct SmoothBarrier {
    TensorPolynomial poly;
    double max_deviation = 0.0;  ///< max |fit - node value| over fitted nodes
    double max_deviation_early = 0.0;  ///< same over nodes with t <= 0.95 T
    std::size_t fitted_nodes = 0;
};

/// Switching levels over (q, nu1, t). The buy level separates Buy (below)
/// from Wait; the sell level separates Wait from Sell (above).
struct BarrierField {
    Axis q, nu, t;
    std::vector<double> buy_level, sell_level;
    std::vector<BarrierStatus> buy_status, sell_status;
    std::optional<SmoothBarrier> buy_smooth, sell_smooth;
    double s_spacing = 0.0;  ///< uncertainty of every node value

    std::size_t index(int iq, int iv, int it) const {
        return (static_cast<std::size_t>(it) * q.n + iq) * nu.n + iv;
    }
    std::size_t size() const { return static_cast<std::size_t>(q.n) * nu.n * t.n; }
    bool smoothed() const { return buy_smooth.has_value() && sell_smooth.has_value(); }
    std::size_t flagged() const;
};

/// Cell-midpoint switching levels from a policy field, scanning s upward on every (q, nu1, t) line.
BarrierField extract_barriers(const PolicyField& policy);

struct SmoothingOptions {
    std::array<int, 3> degrees{5, 5, 6};  ///< in q, nu1, tau
    bool include_terminal_slice = false;  ///< no decision is taken at t = T
    /// Fit in tau = -log(T - t + dt_grid) so the sink near the horizon is resolved.
    bool log_time = true;
};

/// Least-squares tensor polynomial per barrier over the nodes with status Ok.
/// Throws ContractViolation when the data cannot determine the coefficients.
SmoothBarrier smooth_barrier(const BarrierField& field, bool sell_side, const SmoothingOptions& opts = {});

/// Fits both barriers in place.
void smooth_barriers(BarrierField& field, const SmoothingOptions& opts = {});

/// sigma^2 / (kappa (mu1 - mu2) nu1 (1 - nu1)): the slope b_nu1 at which the
/// diffusion direction lies in the switching surface.
double forbidden_slope(double nu, const ModelParams& p);

struct NodeMargin {
    int iq, iv, it;
    bool sell_side;
    double margin;
};

struct NonParallelityReport {
    double min_margin = 0.0;
    double min_buy_margin = 0.0;
    double min_sell_margin = 0.0;
    std::size_t nodes_checked = 0;
    bool used_smooth = false;
    std::vector<NodeMargin> failing;   ///< margin <= threshold
    NodeMargin worst{};
};

/// Margin |sigma - (kappa/sigma)(mu1 - mu2) nu1 (1 - nu1) b_nu1| at every
/// interior-nu node. Slopes come from the smoothed barriers when present,
/// else from central differences of the node values.
NonParallelityReport check_nonparallelity(const BarrierField& barriers, const ModelParams& p,
                                          double threshold = 0.0);

struct MixedDerivativeReport {
    double min_margin = 0.0;           ///< min |V_sq - 1| over the grid
    double terminal_min_margin = 0.0;  ///< same on t = T
    double max_abs_vsq = 0.0;
    int arg_is = 0, arg_iq = 0, arg_iv = 0, arg_it = 0;
};

MixedDerivativeReport check_mixed_derivative(const ValueField& V);

/// Mode implied by comparing s against the smoothed barriers.
Mode classify(double s, double q, double nu, double t, const BarrierField& barriers);

/// Fraction of policy nodes (t < T) whose mode the smoothed barriers reproduce.
double region_consistency(const PolicyField& policy, const BarrierField& barriers);

}  // namespace esopt
