#pragma once

#include "esopt/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

namespace esopt {

/// Lower clamp applied to every filter component before renormalization.
inline constexpr double kFilterFloor = 1e-9;

/// Conditional regime probabilities pi_i = P(Y_t = e_i | price history).
struct FilterState {
    Eigen::VectorXd pi;

    /// Components in [0,1] and summing to one within tol.
    bool valid(double tol = 1e-12) const;
};

/// Filtered price drift kappa * (<mu, pi> + K(t) - s).
double conditional_drift(double s, const FilterState& pi, double t, const ModelParams& p);

/// Diffusion loadings of the filter SDE, pi_i * kappa * (mu_i - <mu,pi>) / sigma.
/// Price and seasonality cancel out of a(s,e_i,t) - a_hat.
Eigen::VectorXd filter_diffusion(const FilterState& pi, const ModelParams& p);

/// One Euler-Maruyama step of the Wonham filter driven by the innovation
/// increment dB, followed by clamp-to-[kFilterFloor,1] and renormalization.
FilterState filter_step(const FilterState& pi, double s, double t, double dB, double dt,
                        const ModelParams& p);

/// Sample path of the regime chain. States are zero-based.
struct RegimePath {
    int initial = 0;
    std::vector<double> jump_times;  ///< strictly increasing
    std::vector<int> states;         ///< state entered at the matching jump time

    int state_at(double t) const;
    /// Time spent in `state` over [0, horizon].
    double occupation(int state, double horizon) const;
};

/// Exact continuous-time Markov chain path on [0, horizon]. The initial state
/// is drawn from nu0 unless given.
RegimePath simulate_regime(const ModelParams& p, double horizon, std::uint64_t seed,
                           std::optional<int> initial = std::nullopt);

struct FilterPath {
    std::vector<double> t;
    std::vector<double> S;
    std::vector<int> Y;     ///< empty in design mode
    Eigen::MatrixXd pi;     ///< D x samples
};

struct TruthOptions {
    std::optional<double> s0;           ///< defaults to <mu, nu0>
    std::optional<int> pinned_regime;   ///< keep Y at this state instead of sampling
    double noise_scale = 1.0;           ///< test hook: scales the price Brownian increments
    int record_stride = 1;              ///< store every n-th step
};

/// Truth mode: price driven by the hidden regime's drift, filter driven by the
/// innovations (dS - a_hat dt)/sigma reconstructed from the observed price.
FilterPath simulate_truth_and_filter(const ModelParams& p, double horizon, double dt,
                                     std::uint64_t seed, const TruthOptions& opts = {});

/// Design mode: price and filter driven by one exogenous Brownian motion B,
/// dS = a_hat dt + sigma dB (the full-information system).
FilterPath simulate_design(const ModelParams& p, double s0, const FilterState& pi0, double horizon,
                           double dt, std::uint64_t seed, int record_stride = 1);

/// CSV columns: t,S[,Y],pi_1..pi_D. Y is written one-based.
void write_filter_csv(std::ostream& os, const FilterPath& path);

}  // namespace esopt
