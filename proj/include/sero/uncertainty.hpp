#pragma once

// Monte-Carlo-dropout uncertainty of encoder features, the running
// element-wise maximum used for normalization, and the scalar uncertainty
// distance with its auxiliary reward.

#include <span>

#include "sero/approximator.hpp"

namespace sero {

/// Element-wise running maximum of observed uncertainty vectors.
struct UncertaintyTracker {
  Vector sigma_max;  // meaningful only once initialized
  bool initialized = false;
  std::size_t dim = 0;

  explicit UncertaintyTracker(std::size_t d = 0) : dim(d) {}

  bool operator==(const UncertaintyTracker&) const = default;
};

/// Population variance of the encoder output over `passes` dropout passes.
/// The masks for all passes are drawn from `rng` up front, so the result only
/// depends on (encoder, state, rng state).
Vector mc_uncertainty(const MlpParams& encoder, std::span<const double> state, std::size_t passes, Rng& rng,
                      KernelPath path = KernelPath::parallel);

/// Same masks as mc_uncertainty, evaluated one pass at a time.
Vector mc_uncertainty_serial(const MlpParams& encoder, std::span<const double> state, std::size_t passes,
                             Rng& rng);

void update_sigma_max(UncertaintyTracker& tracker, std::span<const double> sigma_u);

/// Self-weighted mean of the max-normalized components, sum(n^2) / sum(n),
/// with n_i = clip(sigma_u_i / sigma_max_i, 0, 1). Zero when every n_i is zero.
double uncertainty_distance(const UncertaintyTracker& tracker, std::span<const double> sigma_u);

/// Reward for reaching a state at uncertainty distance `d_u_next`.
inline double auxiliary_reward(double d_u_next) { return -d_u_next; }

}  // namespace sero
