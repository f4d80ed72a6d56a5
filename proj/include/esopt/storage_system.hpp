#pragma once

#include "esopt/barriers.hpp"
#include "esopt/sde_transform.hpp"

#include <memory>

namespace esopt {

/// State (S, Q, pi1) of the controlled storage system under a threshold policy.
/// The buy spec covers s < gamma, the sell spec s >= gamma, where gamma is the
/// midpoint of the two smoothed barriers.
struct StorageSystem {
    ModelParams params;
    std::shared_ptr<const TensorPolynomial> buy, sell;
    DiscontinuousSdeSpec buy_spec;   ///< Buy below the lower barrier, Wait above
    DiscontinuousSdeSpec sell_spec;  ///< Wait below the upper barrier, Sell above

    double gamma(double q, double nu, double t) const;
    /// Buy when s < buy level, Sell when s >= sell level, Wait otherwise.
    Mode mode_at(const Vec& x, double t) const;
    const DiscontinuousSdeSpec& spec_at(const Vec& x, double t) const;
    Vec drift(const Vec& x, double t, Mode m) const;
    Mat diffusion(const Vec& x, double t) const;
    void project(Vec& x) const;
};

/// Builds both discontinuity specs from the smoothed barriers. Throws
/// ContractViolation if the barriers are not smoothed, cross on a barrier node
/// with t < T where both trading modes have a nonzero rate, or make the noise
/// parallel to a surface.
StorageSystem storage_system_spec(const ModelParams& p, const BarrierField& barriers);

}  // namespace esopt
