#pragma once

#include "esopt/model.hpp"
#include "esopt/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace esopt {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Value, time derivative, gradient and Hessian of the surface function at a point.
struct SurfaceJet {
    double value = 0.0;
    double dt = 0.0;
    Vec grad;
    Mat hess;
};

/// SDE dX = alpha(X,t) dt + beta(X,t) dW whose drift jumps across f(x,t) = 0:
/// alpha_plus applies where f >= 0, alpha_minus where f < 0.
struct DiscontinuousSdeSpec {
    using Field = std::function<Vec(const Vec&, double)>;
    int dim = 1;
    int noise_dim = 1;
    Field alpha_plus, alpha_minus;
    std::function<Mat(const Vec&, double)> beta;  ///< dim x noise_dim
    std::function<SurfaceJet(const Vec&, double)> surface;
    /// x_1 solving f(x,t) = u with the other coordinates of x fixed; Newton on x_1 when absent.
    std::function<double(double u, const Vec& x, double t)> inverse;
    /// Applied after every step (e.g. clamping to a state-space box).
    std::function<void(Vec&)> project;
    Vec x0;

    const Field& alpha_side(double f) const { return f >= 0.0 ? alpha_plus : alpha_minus; }
};

/// Throws ContractViolation when |d f/d x_1| or |grad f . beta|^2 fall below
/// `floor` on any of the supplied points.
void validate_spec(const DiscontinuousSdeSpec& spec, const std::vector<Vec>& points, double t,
                   double floor = 1e-10);

/// Coordinates y = (f(x,t), x_2, ..., x_d) and the coefficients of dY.
struct HatCoefficients {
    Vec y;
    Vec alpha;  ///< alpha_hat on the side selected by sign(y_1)
    Mat beta;   ///< beta_hat
};

Vec to_hat(const DiscontinuousSdeSpec& spec, const Vec& x, double t);
Vec from_hat(const DiscontinuousSdeSpec& spec, const Vec& y, double t);

/// Hat coefficients at hat point y. `side` picks alpha_plus (+1) or alpha_minus (-1);
/// 0 means sign(y_1).
HatCoefficients hat_coefficients(const DiscontinuousSdeSpec& spec, const Vec& y, double t, int side = 0);

/// int_0^{y1} exp(-int_0^xi 2 alpha1_hat / (beta_hat beta_hat^T)_11 ds) dxi by nested
/// adaptive Gauss-Kronrod, with x mapped to hat coordinates first.
double g1(const DiscontinuousSdeSpec& spec, const Vec& x, double t);

/// Component k (1-based, 2 <= k <= d) of the transform correction; zero on the surface.
double gk(const DiscontinuousSdeSpec& spec, const Vec& x, double t, int k);

/// G(y, t) with its derivatives in hat coordinates.
struct TransformJet {
    Vec G;
    Mat grad;                   ///< dG_i / dy_j
    Vec dt;                     ///< dG_i / dt
    std::vector<Mat> hess;      ///< hess[i](j,l); empty when not requested
};

/// Evaluates G = (g1, y_2 + g_2, ..., y_d + g_d) by one ODE sweep in xi.
TransformJet transform_jet(const DiscontinuousSdeSpec& spec, const Vec& y, double t, bool second_order);

struct TransformedCoefficients {
    Vec z;
    Vec drift;      ///< grad G . alpha_hat + dG/dt + 1/2 tr(beta_hat^T hess G beta_hat)
    Mat diffusion;  ///< grad G . beta_hat
};

/// Coefficients of Z = G(Y) at the state x (Z's coefficients at z = G(y(x))).
TransformedCoefficients transformed_coefficients(const DiscontinuousSdeSpec& spec, const Vec& x, double t);

class TransformError : public std::runtime_error {
public:
    TransformError(const std::string& what, std::string diagnostics)
        : std::runtime_error(what), diagnostics_(std::move(diagnostics)) {}
    const std::string& diagnostics() const noexcept { return diagnostics_; }

private:
    std::string diagnostics_;
};

/// Solves G(y, t) = z for y by damped Newton from `guess`; throws TransformError on
/// failure. `tol` is relative to 1 + |z| and must stay above the jet's ODE tolerance.
Vec invert_transform(const DiscontinuousSdeSpec& spec, const Vec& z, double t, const Vec& guess,
                     double tol = 1e-9, int max_iter = 40);

struct StepStats {
    std::uint64_t steps = 0;
    std::uint64_t tube_steps = 0;
    std::uint64_t substep_warnings = 0;
    /// Tube steps taken as plain Euler because the transform was ill-conditioned
    /// (non-finite jet, vanishing normal loading) or inversion failed at max depth.
    std::uint64_t fallback_steps = 0;

    StepStats& operator+=(const StepStats& o) {
        steps += o.steps, tube_steps += o.tube_steps, substep_warnings += o.substep_warnings;
        fallback_steps += o.fallback_steps;
        return *this;
    }
};

struct StepOptions {
    double tube_factor = 2.0;
    int max_depth = 10;
    /// Bisection depth allowed after a failed inversion before falling back to Euler.
    int max_inversion_depth = 3;
    /// Tube steps fall back to Euler when |A| * radius exceeds this on either side,
    /// i.e. when exp(-I) would vary by more than e^limit across the tube.
    double max_stiffness = 2.0;
};

/// Advances x over [t, t + dt] with Brownian increment dW. Inside the tube
/// |f| <= tube_factor |beta_hat_1| sqrt(dt) the step is an Euler step of Z;
/// outside it is a plain Euler step of X. Steps that cross the surface from
/// outside the tube, or whose inversion fails, are bisected with a Brownian bridge.
void transformed_step(const DiscontinuousSdeSpec& spec, Vec& x, double t, double dt, const Vec& dW,
                      NormalStream& rng, StepStats& stats, const StepOptions& opts = {});

/// Plain Euler-Maruyama step with the drift chosen pointwise by sign(f).
void euler_step(const DiscontinuousSdeSpec& spec, Vec& x, double t, double dt, const Vec& dW);

struct SdePath {
    std::vector<double> t;
    std::vector<Vec> x;
    std::vector<int> region;  ///< +1 where f >= 0, -1 otherwise
    StepStats stats;
};

enum class Scheme { Plain, Transformed };

const char* to_string(Scheme s);

SdePath simulate_transformed(const DiscontinuousSdeSpec& spec, double horizon, double dt, std::uint64_t seed,
                             Scheme scheme = Scheme::Transformed, int record_stride = 1,
                             const StepOptions& opts = {});

/// Columns t, x_1..x_d, region.
void write_path_csv(std::ostream& os, const SdePath& path);

/// Scalar kinked OU: dX = (-theta X - a sign(X)) dt + sigma dW, surface x = 0.
DiscontinuousSdeSpec kinked_ou_spec(double theta, double a, double sigma, double x0);

}  // namespace esopt
