#include "esopt/filter.hpp"

#include "esopt/random.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace esopt {

bool FilterState::valid(double tol) const {
    if (pi.size() == 0) return false;
    for (Eigen::Index i = 0; i < pi.size(); ++i)
        if (!(pi[i] >= 0.0 && pi[i] <= 1.0)) return false;
    return std::abs(pi.sum() - 1.0) <= tol;
}

double conditional_drift(double s, const FilterState& pi, double t, const ModelParams& p) {
    return p.kappa * (p.mu.dot(pi.pi) + seasonality(t, p) - s);
}

Eigen::VectorXd filter_diffusion(const FilterState& pi, const ModelParams& p) {
    const double mean = p.mu.dot(pi.pi);
    return (pi.pi.array() * (p.mu.array() - mean) * (p.kappa / p.sigma)).matrix();
}

FilterState filter_step(const FilterState& pi, double s, double t, double dB, double dt,
                        const ModelParams& p) {
    if (!(dt > 0)) throw ContractViolation("filter_step: dt must be > 0");
    (void)s;
    (void)t;
    Eigen::VectorXd next = pi.pi + p.Lambda.transpose() * pi.pi * dt + filter_diffusion(pi, p) * dB;
    next = next.cwiseMax(kFilterFloor).cwiseMin(1.0);
    next /= next.sum();
    return {std::move(next)};
}

int RegimePath::state_at(double t) const {
    auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
    if (it == jump_times.begin()) return initial;
    return states[static_cast<std::size_t>(it - jump_times.begin()) - 1];
}

double RegimePath::occupation(int state, double horizon) const {
    double total = 0.0, from = 0.0;
    int current = initial;
    for (std::size_t k = 0; k < jump_times.size() && jump_times[k] < horizon; ++k) {
        if (current == state) total += jump_times[k] - from;
        from = jump_times[k];
        current = states[k];
    }
    if (current == state) total += horizon - from;
    return total;
}

namespace {

int draw_categorical(const Eigen::VectorXd& weights, double u) {
    const double total = weights.sum();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
        acc += weights[i] / total;
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
}

}  // namespace

RegimePath simulate_regime(const ModelParams& p, double horizon, std::uint64_t seed,
                           std::optional<int> initial) {
    if (!(horizon > 0)) throw ContractViolation("simulate_regime: horizon must be > 0");
    NormalStream rng(seed);
    RegimePath path;
    path.initial = initial ? *initial : draw_categorical(p.nu0, rng.uniform());
    int state = path.initial;
    double t = 0.0;
    for (;;) {
        const double rate = -p.Lambda(state, state);
        if (rate <= 0.0) break;  // absorbing
        t += rng.exponential(rate);
        if (t >= horizon) break;
        Eigen::VectorXd jump = p.Lambda.row(state).transpose();
        jump[state] = 0.0;
        state = draw_categorical(jump, rng.uniform());
        path.jump_times.push_back(t);
        path.states.push_back(state);
    }
    return path;
}

namespace {

FilterPath make_path(std::size_t samples, int D, bool truth) {
    FilterPath out;
    out.t.reserve(samples);
    out.S.reserve(samples);
    if (truth) out.Y.reserve(samples);
    out.pi.resize(D, static_cast<Eigen::Index>(samples));
    return out;
}

void record(FilterPath& out, std::size_t slot, double t, double s, const FilterState& pi,
            std::optional<int> y) {
    out.t.push_back(t);
    out.S.push_back(s);
    if (y) out.Y.push_back(*y);
    out.pi.col(static_cast<Eigen::Index>(slot)) = pi.pi;
}

}  // namespace

FilterPath simulate_truth_and_filter(const ModelParams& p, double horizon, double dt,
                                     std::uint64_t seed, const TruthOptions& opts) {
    if (!(dt > 0)) throw ContractViolation("simulate_truth_and_filter: dt must be > 0");
    const int stride = std::max(1, opts.record_stride);
    const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
    const std::size_t samples = steps / static_cast<std::size_t>(stride) + 1;

    RegimePath regime;
    if (opts.pinned_regime)
        regime.initial = *opts.pinned_regime;
    else
        regime = simulate_regime(p, horizon, stream_seed(seed, 1));

    NormalStream noise(stream_seed(seed, 2));
    FilterState pi{p.nu0};
    double s = opts.s0 ? *opts.s0 : p.mu.dot(p.nu0);
    const double sqdt = std::sqrt(dt);

    FilterPath out = make_path(samples, p.regimes(), true);
    std::size_t slot = 0;
    record(out, slot++, 0.0, s, pi, regime.state_at(0.0));
    for (std::size_t n = 0; n < steps; ++n) {
        const double t = static_cast<double>(n) * dt;
        const int y = regime.state_at(t);
        const double true_drift = p.kappa * (p.mu[y] + seasonality(t, p) - s);
        const double dS = true_drift * dt + p.sigma * opts.noise_scale * sqdt * noise();
        const double dB = (dS - conditional_drift(s, pi, t, p) * dt) / p.sigma;
        pi = filter_step(pi, s, t, dB, dt, p);
        s += dS;
        if ((n + 1) % static_cast<std::size_t>(stride) == 0 && slot < samples)
            record(out, slot++, static_cast<double>(n + 1) * dt, s, pi, regime.state_at((n + 1) * dt));
    }
    out.pi.conservativeResize(Eigen::NoChange, static_cast<Eigen::Index>(slot));
    return out;
}

FilterPath simulate_design(const ModelParams& p, double s0, const FilterState& pi0, double horizon,
                           double dt, std::uint64_t seed, int record_stride) {
    if (!(dt > 0)) throw ContractViolation("simulate_design: dt must be > 0");
    const int stride = std::max(1, record_stride);
    const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
    const std::size_t samples = steps / static_cast<std::size_t>(stride) + 1;
    NormalStream noise(seed);
    FilterState pi = pi0;
    double s = s0;
    const double sqdt = std::sqrt(dt);
    FilterPath out = make_path(samples, p.regimes(), false);
    std::size_t slot = 0;
    record(out, slot++, 0.0, s, pi, std::nullopt);
    for (std::size_t n = 0; n < steps; ++n) {
        const double t = static_cast<double>(n) * dt;
        const double dB = sqdt * noise();
        const double drift = conditional_drift(s, pi, t, p);
        pi = filter_step(pi, s, t, dB, dt, p);
        s += drift * dt + p.sigma * dB;
        if ((n + 1) % static_cast<std::size_t>(stride) == 0 && slot < samples)
            record(out, slot++, static_cast<double>(n + 1) * dt, s, pi, std::nullopt);
    }
    out.pi.conservativeResize(Eigen::NoChange, static_cast<Eigen::Index>(slot));
    return out;
}

void write_filter_csv(std::ostream& os, const FilterPath& path) {
    const bool truth = !path.Y.empty();
    os << "t,S";
    if (truth) os << ",Y";
    for (Eigen::Index i = 0; i < path.pi.rows(); ++i) os << ",pi_" << (i + 1);
    os << '\n';
    os.precision(17);
    for (std::size_t k = 0; k < path.t.size(); ++k) {
        os << path.t[k] << ',' << path.S[k];
        if (truth) os << ',' << (path.Y[k] + 1);
        for (Eigen::Index i = 0; i < path.pi.rows(); ++i) os << ',' << path.pi(i, static_cast<Eigen::Index>(k));
        os << '\n';
    }
}

}  // namespace esopt
