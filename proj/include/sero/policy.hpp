#pragma once

// Squashed diagonal-Gaussian policy: a dropout-equipped encoder feeding
// separate mean and log-std heads, actions a = tanh(mu + sigma * z).

#include <span>

#include "sero/approximator.hpp"

namespace sero {

struct GaussianPolicy {
  static constexpr double kLogStdMin = -20.0;
  static constexpr double kLogStdMax = 2.0;

  MlpParams encoder;      // obs -> features, dropout on hidden layers
  MlpParams mu_head;      // features -> action_dim
  MlpParams logstd_head;  // features -> action_dim
  std::size_t action_dim = 0;

  std::size_t obs_dim() const { return encoder.input_dim(); }
  std::size_t feature_dim() const { return encoder.output_dim(); }
  void validate() const;

  static GaussianPolicy create(std::size_t obs_dim, std::size_t action_dim,
                               const std::vector<std::size_t>& encoder_hidden, std::size_t feature_dim,
                               double dropout, Rng& rng);

  bool operator==(const GaussianPolicy&) const = default;
};

/// Pre-squash diagonal Gaussian.
struct ActionDistribution {
  Vector mu;
  Vector sigma;
};

enum class ActMode { stochastic, deterministic };

/// Deterministic encoder pass (no dropout) feeding the heads.
ActionDistribution distribution(const GaussianPolicy& policy, std::span<const double> state);

/// Action in (-1, 1)^action_dim.
Vector act(const GaussianPolicy& policy, std::span<const double> state, ActMode mode, Rng& rng);

/// log density of tanh(u) under the squashed distribution.
double log_prob(const ActionDistribution& dist, std::span<const double> u);

/// d log_prob / d mu and d log_prob / d log(sigma), with u held fixed.
struct LogProbGrad {
  Vector d_mu;
  Vector d_log_sigma;
};
LogProbGrad log_prob_grad(const ActionDistribution& dist, std::span<const double> u);

/// Closed-form KL(p || q) between diagonal Gaussians.
double kl_divergence(const ActionDistribution& p, const ActionDistribution& q);

// Batched pass used by the learner.

struct PolicyPass {
  MlpTape encoder_tape;
  MlpTape mu_tape;
  MlpTape logstd_tape;
  Matrix mu;
  Matrix raw_logstd;
  Matrix logstd;  // clamped
  Matrix sigma;
};

PolicyPass policy_forward(const GaussianPolicy& policy, const Matrix& states,
                          const DropoutMask* encoder_mask = nullptr);

struct PolicyGradients {
  GradientSet encoder;
  GradientSet mu_head;
  GradientSet logstd_head;
};

/// Backpropagates d/d(mu) and d/d(clamped logstd) into all three networks.
PolicyGradients policy_backward(const GaussianPolicy& policy, const PolicyPass& pass, const Matrix& d_mu,
                                const Matrix& d_logstd);

}  // namespace sero
