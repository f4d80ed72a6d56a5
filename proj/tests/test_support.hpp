#pragma once

#include "esopt/barriers.hpp"
#include "esopt/hjb.hpp"
#include "esopt/storage_system.hpp"

#include <memory>

namespace esopt::testing {

/// Coarse grid on the preset's price window; solves in well under a second.
inline Grid4D small_grid(const ModelParams& p) {
    Grid4D g = default_grid(p);
    g.s.n = 76;
    g.q.n = 11;
    g.nu.n = 11;
    g.t.n = 40;
    return g;
}

/// Solved field, smoothed barriers and storage system on the small grid, built once.
struct SmallPipeline {
    ModelParams params;
    SolveResult solution;
    BarrierField barriers;
    StorageSystem system;
};

inline const SmallPipeline& small_pipeline() {
    static const std::unique_ptr<SmallPipeline> cached = [] {
        auto out = std::make_unique<SmallPipeline>();
        out->params = paper2016_preset();
        out->solution = backward_solve(out->params, small_grid(out->params));
        out->barriers = extract_barriers(out->solution.policy);
        smooth_barriers(out->barriers);
        out->system = storage_system_spec(out->params, out->barriers);
        return out;
    }();
    return *cached;
}

}  // namespace esopt::testing
