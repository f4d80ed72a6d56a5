#include "esopt/evaluate.hpp"

#include "esopt/filter.hpp"
#include "esopt/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace esopt {

double pairwise_sum(const double* x, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x[i];
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

double grid_value(const ValueField& V, const SystemState& x) {
    const auto [it, w] = V.grid.t.locate(x.t);
    return V.interpolate(x.s, x.q, x.pi1, w < 0.5 ? it : it + 1);
}

namespace {

/// Reward over one step charged on the realized storage change: buying pays
/// s + d_plus per unit, selling earns s - d_minus, at the left-point price.
/// Equals running_reward * h for an Euler step away from the capacity clamp;
/// inside the transformed tube Q does not move by exactly u h.
double step_reward(double s, double q, double dq, double h, const ModelParams& p) {
    return -dq * (dq >= 0.0 ? s + p.d_plus : s - p.d_minus) - p.c0 * q * h;
}

}  // namespace

PathResult simulate_controlled_path(const StorageSystem& sys, const SystemState& start, std::uint64_t seed,
                                    const SimulationOptions& opts, bool negate) {
    const ModelParams& p = sys.params;
    if (start.q < p.q_lo || start.q > p.q_hi) throw ContractViolation("simulate_controlled_path: q outside capacity");
    if (start.pi1 < 0.0 || start.pi1 > 1.0) throw ContractViolation("simulate_controlled_path: pi1 outside [0,1]");
    if (start.t < 0.0 || start.t > p.T) throw ContractViolation("simulate_controlled_path: t outside [0,T]");
    if (!(opts.dt > 0.0)) throw ContractViolation("simulate_controlled_path: dt must be positive");

    PathResult out;
    Vec x(3);
    x << start.s, start.q, std::clamp(start.pi1, kFilterFloor, 1.0 - kFilterFloor);
    const auto steps = static_cast<long>(std::llround((p.T - start.t) / opts.dt));
    const double h = steps > 0 ? (p.T - start.t) / static_cast<double>(steps) : 0.0;
    NormalStream noise(seed);
    NormalStream bridge(mix64(seed ^ 0x5bd1e995ULL));
    const double scale = (negate ? -1.0 : 1.0) * opts.noise_scale * std::sqrt(h);
    if (opts.record) out.path.emplace();
    const auto record = [&](double t, Mode m) {
        if (!out.path) return;
        out.path->t.push_back(t);
        out.path->states.push_back({x[0], x[1], x[2], t});
        out.path->modes.push_back(m);
    };

    Vec dW(1);
    double running = 0.0;
    for (long n = 0; n < steps; ++n) {
        const double t = start.t + static_cast<double>(n) * h;
        const Mode m = sys.mode_at(x, t);
        record(t, m);
        const double s0 = x[0], q0 = x[1];
        dW[0] = scale * noise();
        if (opts.scheme == Scheme::Plain) {
            x += sys.drift(x, t, m) * h + sys.diffusion(x, t) * dW;
            sys.project(x);
            ++out.stats.steps;
        } else {
            transformed_step(sys.spec_at(x, t), x, t, h, dW, bridge, out.stats, opts.step);
        }
        running += std::exp(-p.rho * (t - start.t)) * step_reward(s0, q0, x[1] - q0, h, p);
    }
    record(p.T, sys.mode_at(x, p.T));
    out.reward = running + std::exp(-p.rho * (p.T - start.t)) * terminal_reward(x[0], x[1], p);
    out.final_state = {x[0], x[1], x[2], p.T};
    return out;
}

EvaluationReport estimate_J(const StorageSystem& sys, const std::vector<SystemState>& starts,
                            const EvaluationOptions& opts, const ValueField* V) {
    if (opts.n_paths < 2) throw ContractViolation("estimate_J: at least two paths are required");
    EvaluationReport rep;
    rep.scheme = to_string(opts.sim.scheme);
    rep.dt = opts.sim.dt;
    rep.antithetic = opts.antithetic;
    SimulationOptions sim = opts.sim;
    sim.record = false;
    const std::size_t units = opts.antithetic ? (opts.n_paths + 1) / 2 : opts.n_paths;

    for (std::size_t k = 0; k < starts.size(); ++k) {
        std::vector<double> value(units);
        std::vector<StepStats> stats(units);
        parallel_for(units, [&](std::size_t i) {
            const std::uint64_t seed = stream_seed(opts.seed, (static_cast<std::uint64_t>(k) << 32) + i);
            PathResult a = simulate_controlled_path(sys, starts[k], seed, sim, false);
            stats[i] = a.stats;
            value[i] = a.reward;
            if (opts.antithetic) {
                const PathResult b = simulate_controlled_path(sys, starts[k], seed, sim, true);
                value[i] = 0.5 * (a.reward + b.reward);
                stats[i] += b.stats;
            }
        });
        StartReport r;
        r.start = starts[k];
        r.paths = opts.antithetic ? 2 * units : units;
        r.mean = pairwise_sum(value.data(), units) / static_cast<double>(units);
        std::vector<double> sq(units);
        for (std::size_t i = 0; i < units; ++i) sq[i] = (value[i] - r.mean) * (value[i] - r.mean);
        const double var = pairwise_sum(sq.data(), units) / static_cast<double>(units - 1);
        r.std_error = std::sqrt(var / static_cast<double>(units));
        for (const auto& s : stats) r.stats += s;
        r.grid_value = V ? grid_value(*V, starts[k]) : std::numeric_limits<double>::quiet_NaN();
        r.discrepancy = r.mean - r.grid_value;
        rep.starts.push_back(r);
    }
    return rep;
}

void write_evaluation_csv(std::ostream& os, const EvaluationReport& report) {
    os.precision(12);
    os << "s,q,nu1,t,scheme,dt,antithetic,paths,mean_J,std_error,grid_V,discrepancy,tube_steps,substep_warnings,fallback_steps\n";
    for (const auto& r : report.starts)
        os << r.start.s << ',' << r.start.q << ',' << r.start.pi1 << ',' << r.start.t << ',' << report.scheme << ','
           << report.dt << ',' << (report.antithetic ? 1 : 0) << ',' << r.paths << ',' << r.mean << ','
           << r.std_error << ',' << r.grid_value << ',' << r.discrepancy << ',' << r.stats.tube_steps << ','
           << r.stats.substep_warnings << ',' << r.stats.fallback_steps << '\n';
}

void write_path_csv(std::ostream& os, const PathRecord& path) {
    os.precision(12);
    os << "t,S,Q,pi_1,mode\n";
    for (std::size_t i = 0; i < path.t.size(); ++i)
        os << path.t[i] << ',' << path.states[i].s << ',' << path.states[i].q << ',' << path.states[i].pi1 << ','
           << to_string(path.modes[i]) << '\n';
}

}  // namespace esopt
