#pragma once

#include "esopt/evaluate.hpp"
#include "esopt/grid.hpp"
#include "esopt/hjb.hpp"
#include "esopt/model.hpp"

#include <string>
#include <vector>

namespace esopt {

struct SimulationConfig {
    double dt = 1e-3;
    std::size_t n_paths = 1000;
    Scheme scheme = Scheme::Plain;
    bool antithetic = false;
    std::vector<SystemState> starts{{40.0, 50.0, 0.5, 0.0}, {30.0, 30.0, 0.3, 0.0}, {50.0, 70.0, 0.7, 0.0}};
    std::size_t dump_paths = 3;      ///< controlled paths written by `simulate`
    double filter_horizon = 1.0;     ///< `filter-demo` path length
    double filter_dt = 1e-3;
    std::size_t filter_paths = 3;
    int csv_time_stride = 10;        ///< time-slice stride of the long-format solve CSV
};

struct RunConfig {
    std::string preset;  ///< empty when the model section stands alone
    ModelParams model;
    Grid4D grid;
    SolverOptions solver;
    SimulationConfig simulation;
    std::string out_dir = "runs";
};

/// Default configuration built on a named preset.
RunConfig default_config(const std::string& preset_name = "paper2016");

/// Parses a JSON document. A top-level "preset" supplies defaults that the
/// "model", "grid", "solver", "simulation" and "output" sections override.
/// Throws ConfigError naming the offending field.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);

/// Every section checked against its invariants (model, grid, solver, simulation).
void validate(const RunConfig& cfg);

/// JSON rendering used for manifests; parse_config(to_json(c)) reproduces c.
std::string to_json(const RunConfig& cfg);

}  // namespace esopt
