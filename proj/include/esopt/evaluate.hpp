#pragma once

#include "esopt/grid.hpp"
#include "esopt/sde_transform.hpp"
#include "esopt/storage_system.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

namespace esopt {

struct SystemState {
    double s = 40.0;
    double q = 50.0;
    double pi1 = 0.5;
    double t = 0.0;
};

struct SimulationOptions {
    double dt = 1e-3;
    Scheme scheme = Scheme::Plain;
    /// Multiplies every Brownian increment; 0 gives deterministic dynamics (testing only).
    double noise_scale = 1.0;
    bool record = false;
    StepOptions step;
};

struct PathRecord {
    std::vector<double> t;
    std::vector<SystemState> states;
    std::vector<Mode> modes;
};

struct PathResult {
    double reward = 0.0;  ///< discounted running reward plus discounted terminal reward
    SystemState final_state;
    StepStats stats;
    std::optional<PathRecord> path;
};

/// One path of (S, Q, pi1) under the threshold policy of `sys`, started at `start`.
/// `negate` flips every Brownian increment (antithetic partner). The running
/// reward of each step is charged on the realized change of Q.
PathResult simulate_controlled_path(const StorageSystem& sys, const SystemState& start, std::uint64_t seed,
                                    const SimulationOptions& opts = {}, bool negate = false);

struct StartReport {
    SystemState start;
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t paths = 0;
    double grid_value = 0.0;   ///< NaN without a value field
    double discrepancy = 0.0;  ///< mean - grid_value
    StepStats stats;
};

struct EvaluationReport {
    std::vector<StartReport> starts;
    std::string scheme;
    double dt = 0.0;
    bool antithetic = false;
};

struct EvaluationOptions {
    std::size_t n_paths = 1000;
    std::uint64_t seed = 1;
    bool antithetic = false;
    SimulationOptions sim;
};

/// Independent paths per start with per-path counter-derived seeds; the
/// reduction is pairwise, so the report does not depend on the thread count.
/// With antithetic pairing the standard error is taken over pair means.
EvaluationReport estimate_J(const StorageSystem& sys, const std::vector<SystemState>& starts,
                            const EvaluationOptions& opts, const ValueField* V = nullptr);

/// Grid value at the start (trilinear in s, q, nu1 on the nearest time slice).
double grid_value(const ValueField& V, const SystemState& x);

/// Sum by recursive halving.
double pairwise_sum(const double* x, std::size_t n);

void write_evaluation_csv(std::ostream& os, const EvaluationReport& report);
void write_path_csv(std::ostream& os, const PathRecord& path);

}  // namespace esopt
