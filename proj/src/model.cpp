#include "esopt/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace esopt {

void ModelParams::validate() const {
    const auto D = mu.size();
    if (D < 1) throw ConfigError("mu", "at least one regime required");
    if (!(kappa > 0)) throw ConfigError("kappa", "must be > 0");
    if (!(sigma > 0)) throw ConfigError("sigma", "must be > 0");
    for (Eigen::Index i = 1; i < mu.size(); ++i)
        if (!(mu[i - 1] > mu[i])) throw ConfigError("mu", "must be strictly decreasing");
    if (Lambda.rows() != mu.size() || Lambda.cols() != mu.size())
        throw ConfigError("Lambda", "must be D x D with D = len(mu)");
    for (Eigen::Index i = 0; i < Lambda.rows(); ++i) {
        for (Eigen::Index j = 0; j < Lambda.cols(); ++j)
            if (i != j && Lambda(i, j) < 0) throw ConfigError("Lambda", "off-diagonal entries must be >= 0");
        if (std::abs(Lambda.row(i).sum()) > 1e-12) throw ConfigError("Lambda", "rows must sum to 0");
    }
    if (nu0.size() != mu.size()) throw ConfigError("nu0", "length must equal len(mu)");
    for (Eigen::Index i = 0; i < nu0.size(); ++i)
        if (!(nu0[i] > 0)) throw ConfigError("nu0", "components must be > 0");
    if (std::abs(nu0.sum() - 1.0) > 1e-12) throw ConfigError("nu0", "must sum to 1");
    if (!(cS > 0 && cS < 1)) throw ConfigError("cS", "must lie in (0,1)");
    if (d_plus < 0) throw ConfigError("d_plus", "must be >= 0");
    if (d_minus < 0) throw ConfigError("d_minus", "must be >= 0");
    if (c0 < 0) throw ConfigError("c0", "must be >= 0");
    if (!(q_lo >= 0)) throw ConfigError("q_lo", "must be >= 0");
    if (!(q_hi > q_lo)) throw ConfigError("q_hi", "must exceed q_lo");
    // M_u = 0 is admitted for the no-control oracle configurations.
    if (!(M_u >= 0)) throw ConfigError("M_u", "must be >= 0");
    if (!(ramp_width > 0 && ramp_width <= 0.5 * (q_hi - q_lo)))
        throw ConfigError("ramp_width", "must lie in (0, (q_hi - q_lo)/2]");
    if (!(rho > 0)) throw ConfigError("rho", "must be > 0");
    if (!(T > 0)) throw ConfigError("T", "must be > 0");
    if (seasonality && !(seasonality->season_length > 0))
        throw ConfigError("seasonality.Delta", "must be > 0");
}

ModelParams paper2016_preset() {
    ModelParams p;
    p.kappa = 15.0;
    p.mu = Eigen::Vector2d(50.0, 30.0);
    p.sigma = 50.0;
    p.Lambda.resize(2, 2);
    p.Lambda << -0.5, 0.5, 0.5, -0.5;
    p.rho = 0.05;
    p.T = 1.0;
    p.nu0 = Eigen::Vector2d(0.5, 0.5);
    p.d_plus = 10.0;
    p.d_minus = 10.0;
    p.c0 = 0.0;
    p.cS = 0.95;
    p.q_lo = 0.0;
    p.q_hi = 100.0;
    p.M_u = 730.0;
    p.ramp_width = 5.0;
    return p;
}

ModelParams preset(const std::string& name) {
    if (name == "paper2016") return paper2016_preset();
    throw ConfigError("preset", "unknown preset '" + name + "'");
}

double seasonality(double t, const ModelParams& p) {
    if (!p.seasonality) return 0.0;
    const auto& k = *p.seasonality;
    return k.amplitude * std::cos(2.0 * std::numbers::pi * (t - k.peak_time) / k.season_length);
}

double running_reward(double s, double q, double u, const ModelParams& p) {
    constexpr double slack = 1e-9;
    if (q < p.q_lo - slack || q > p.q_hi + slack)
        throw ContractViolation("running_reward: level outside capacity");
    if (std::abs(u) > p.M_u * (1.0 + 1e-12) + slack)
        throw ContractViolation("running_reward: rate exceeds M_u");
    if (u >= 0) return -u * (s + p.d_plus) - p.c0 * q;
    return -u * (s - p.d_minus) - p.c0 * q;
}

double terminal_reward(double s, double q, const ModelParams& p) {
    return q * (p.cS * s - p.d_minus);
}

double smoothstep5(double x) {
    x = std::clamp(x, 0.0, 1.0);
    return x * x * x * (x * (6.0 * x - 15.0) + 10.0);
}

RateBounds rate_bounds(double q, const ModelParams& p) {
    constexpr double slack = 1e-9;
    if (q < p.q_lo - slack || q > p.q_hi + slack)
        throw ContractViolation("rate_bounds: level outside capacity");
    return {-p.M_u * smoothstep5((q - p.q_lo) / p.ramp_width),
            p.M_u * smoothstep5((p.q_hi - q) / p.ramp_width)};
}

}  // namespace esopt
