#pragma once

#include "esopt/grid.hpp"
#include "esopt/model.hpp"

#include <stdexcept>
#include <string>

namespace esopt {

class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, std::string diagnostics)
        : std::runtime_error(what), diagnostics_(std::move(diagnostics)) {}
    const std::string& diagnostics() const noexcept { return diagnostics_; }

private:
    std::string diagnostics_;
};

struct SolverOptions {
    /// 1: controls from the semi-Lagrangian argmax against the later time
    /// slice. >1: additionally re-derive controls from V_q of the current
    /// iterate and re-solve until the update falls below `tolerance`.
    int policy_iterations = 1;
    double tolerance = 1e-8;  ///< relative to max|V| on the slice
};

struct ControlChoice {
    Mode mode;
    double rate;
};

/// Threshold rule: buy when s <= Vq - d_plus, sell when s >= Vq + d_minus,
/// otherwise wait. Boundaries are inclusive; Sell wins if both fire.
ControlChoice pointwise_control(double s, double q, double Vq, const ModelParams& p);

struct SolveDiagnostics {
    int steps = 0;
    int max_policy_iterations_used = 0;
    double last_relative_change = 0.0;
};

struct SolveResult {
    ValueField value;
    PolicyField policy;
    SolveDiagnostics diagnostics;
};

/// Backward induction for the HJB equation on a two-regime grid.
///
/// Each step treats the storage transport u*V_q semi-Lagrangially (the value
/// is carried from the later slice at q + u*dt, clamped to capacity), solves
/// the price/filter operator fully implicitly on every q-plane, and applies
/// discounting as the exact factor exp(-rho*dt). The terminal slice is
/// terminal_reward itself.
SolveResult backward_solve(const ModelParams& p, const Grid4D& grid, const SolverOptions& opts = {});

/// Finite-difference estimate of V_sq: central in the interior, one-sided at edges.
Field4D mixed_derivative_field(const ValueField& V);

/// Finite-difference estimate of V_q at one node (central, one-sided at q edges).
double value_dq(const ValueField& V, int is, int iq, int iv, int it);

}  // namespace esopt
