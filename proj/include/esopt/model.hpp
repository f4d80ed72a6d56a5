#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

namespace esopt {

/// Raised when a caller passes arguments outside an operation's domain.
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised by parameter/config validation; the message names the field.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string field, const std::string& what)
        : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Cyclical equilibrium-price component K(t) = amplitude * cos(2*pi*(t - peak_time)/season_length).
struct Seasonality {
    double amplitude = 0.0;
    double peak_time = 0.0;
    double season_length = 1.0;
};

/// Market, regime, cost and capacity constants of the storage problem.
///
/// Units: prices in currency per energy unit, time in years, levels in
/// energy units, rates in energy units per year.
struct ModelParams {
    double kappa = 15.0;            ///< mean-reversion speed
    Eigen::VectorXd mu;             ///< regime mean levels, strictly decreasing
    double sigma = 50.0;            ///< price volatility
    Eigen::MatrixXd Lambda;         ///< regime intensity matrix (rows sum to zero)
    double rho = 0.05;              ///< discount rate
    double T = 1.0;                 ///< horizon
    Eigen::VectorXd nu0;            ///< initial regime distribution
    double d_plus = 10.0;           ///< fixed cost per unit bought
    double d_minus = 10.0;          ///< fixed cost per unit sold
    double c0 = 0.0;                ///< storage cost rate
    double cS = 0.95;               ///< scrap rate applied at the horizon
    double q_lo = 0.0;
    double q_hi = 100.0;
    double M_u = 730.0;             ///< max charge/discharge rate
    double ramp_width = 5.0;        ///< width of the smooth rate-bound ramps
    std::optional<Seasonality> seasonality;

    int regimes() const { return static_cast<int>(mu.size()); }

    /// Throws ConfigError naming the first violated field.
    void validate() const;
};

/// The two-regime parameter set used in the numerical study (K == 0).
ModelParams paper2016_preset();

/// Looks up an embedded preset by name; throws ConfigError for unknown names.
ModelParams preset(const std::string& name);

double seasonality(double t, const ModelParams& p);

/// Reward rate F(s, q, u): buying pays s + d_plus per unit, selling earns s - d_minus.
double running_reward(double s, double q, double u, const ModelParams& p);

/// Liquidation value of the remaining storage at the horizon.
double terminal_reward(double s, double q, const ModelParams& p);

/// 6x^5 - 15x^4 + 10x^3 on [0,1], clamped outside.
double smoothstep5(double x);

struct RateBounds {
    double u_min;  ///< most negative admissible rate (selling), <= 0
    double u_max;  ///< largest admissible rate (buying), >= 0
};

/// Admissible rate interval at level q. Both ends vanish at the matching
/// capacity bound and ramp to the plateau +-M_u over ramp_width (C^2).
RateBounds rate_bounds(double q, const ModelParams& p);

}  // namespace esopt
