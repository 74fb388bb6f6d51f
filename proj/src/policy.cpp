#include "sero/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sero/errors.hpp"

namespace sero {

namespace {

constexpr double kTanhEps = 1e-6;
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

void check_dist(const ActionDistribution& d) {
  if (d.mu.size() != d.sigma.size()) throw ShapeError("distribution mu/sigma size mismatch");
}

}  // namespace

void GaussianPolicy::validate() const {
  encoder.validate();
  mu_head.validate();
  logstd_head.validate();
  if (mu_head.input_dim() != feature_dim() || logstd_head.input_dim() != feature_dim()) {
    throw ShapeError("policy heads must consume encoder features");
  }
  if (mu_head.output_dim() != action_dim || logstd_head.output_dim() != action_dim) {
    throw ShapeError("policy heads must emit action_dim values");
  }
  if (mu_head.has_dropout() || logstd_head.has_dropout()) throw ConfigError("policy heads carry no dropout");
}

GaussianPolicy GaussianPolicy::create(std::size_t obs_dim, std::size_t action_dim,
                                      const std::vector<std::size_t>& encoder_hidden, std::size_t feature_dim,
                                      double dropout, Rng& rng) {
  GaussianPolicy p;
  p.encoder = MlpParams::create(obs_dim, encoder_hidden, feature_dim, dropout, rng);
  p.mu_head = MlpParams::create(feature_dim, {}, action_dim, 0.0, rng);
  p.logstd_head = MlpParams::create(feature_dim, {}, action_dim, 0.0, rng);
  p.action_dim = action_dim;
  p.validate();
  return p;
}

ActionDistribution distribution(const GaussianPolicy& policy, std::span<const double> state) {
  const Vector features = forward(policy.encoder, state);
  ActionDistribution d;
  d.mu = forward(policy.mu_head, features);
  d.sigma = forward(policy.logstd_head, features);
  for (double& s : d.sigma) {
    s = std::exp(std::clamp(s, GaussianPolicy::kLogStdMin, GaussianPolicy::kLogStdMax));
  }
  return d;
}

Vector act(const GaussianPolicy& policy, std::span<const double> state, ActMode mode, Rng& rng) {
  const ActionDistribution d = distribution(policy, state);
  Vector a(d.mu.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double u = mode == ActMode::deterministic ? d.mu[k] : d.mu[k] + d.sigma[k] * standard_normal(rng);
    // tanh rounds to +-1 for |u| > ~19; keep the open interval.
    a[k] = std::clamp(std::tanh(u), std::nextafter(-1.0, 0.0), std::nextafter(1.0, 0.0));
  }
  return a;
}

double log_prob(const ActionDistribution& dist, std::span<const double> u) {
  check_dist(dist);
  if (u.size() != dist.mu.size()) throw ShapeError("log_prob: action dimension mismatch");
  double total = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double z = (u[k] - dist.mu[k]) / dist.sigma[k];
    const double t = std::tanh(u[k]);
    total += -0.5 * z * z - std::log(dist.sigma[k]) - kHalfLog2Pi - std::log(1.0 - t * t + kTanhEps);
  }
  return total;
}

LogProbGrad log_prob_grad(const ActionDistribution& dist, std::span<const double> u) {
  check_dist(dist);
  LogProbGrad g{Vector(u.size()), Vector(u.size())};
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double z = (u[k] - dist.mu[k]) / dist.sigma[k];
    g.d_mu[k] = z / dist.sigma[k];
    g.d_log_sigma[k] = z * z - 1.0;
  }
  return g;
}

double kl_divergence(const ActionDistribution& p, const ActionDistribution& q) {
  check_dist(p);
  check_dist(q);
  if (p.mu.size() != q.mu.size()) throw ShapeError("kl_divergence: dimension mismatch");
  double kl = 0.0;
  for (std::size_t k = 0; k < p.mu.size(); ++k) {
    const double diff = p.mu[k] - q.mu[k];
    const double var_q = q.sigma[k] * q.sigma[k];
    kl += std::log(q.sigma[k] / p.sigma[k]) + (p.sigma[k] * p.sigma[k] + diff * diff) / (2.0 * var_q) - 0.5;
  }
  // Rounding can leave a tiny negative residue for nearly equal inputs.
  return std::max(kl, 0.0);
}

PolicyPass policy_forward(const GaussianPolicy& policy, const Matrix& states, const DropoutMask* encoder_mask) {
  PolicyPass pass;
  const Matrix features = forward_batch(policy.encoder, states, encoder_mask, &pass.encoder_tape);
  pass.mu = forward_batch(policy.mu_head, features, nullptr, &pass.mu_tape);
  pass.raw_logstd = forward_batch(policy.logstd_head, features, nullptr, &pass.logstd_tape);
  pass.logstd = pass.raw_logstd;
  pass.sigma = Matrix(pass.logstd.rows, pass.logstd.cols);
  for (std::size_t i = 0; i < pass.logstd.data.size(); ++i) {
    pass.logstd.data[i] = std::clamp(pass.logstd.data[i], GaussianPolicy::kLogStdMin, GaussianPolicy::kLogStdMax);
    pass.sigma.data[i] = std::exp(pass.logstd.data[i]);
  }
  return pass;
}

PolicyGradients policy_backward(const GaussianPolicy& policy, const PolicyPass& pass, const Matrix& d_mu,
                                const Matrix& d_logstd) {
  Matrix d_raw = d_logstd;
  for (std::size_t i = 0; i < d_raw.data.size(); ++i) {
    const double r = pass.raw_logstd.data[i];
    if (r < GaussianPolicy::kLogStdMin || r > GaussianPolicy::kLogStdMax) d_raw.data[i] = 0.0;
  }
  PolicyGradients grads;
  auto mu_back = backward(policy.mu_head, pass.mu_tape, d_mu);
  auto ls_back = backward(policy.logstd_head, pass.logstd_tape, d_raw);
  grads.mu_head = std::move(mu_back.grads);
  grads.logstd_head = std::move(ls_back.grads);
  Matrix d_features = std::move(mu_back.input_grad);
  for (std::size_t i = 0; i < d_features.data.size(); ++i) d_features.data[i] += ls_back.input_grad.data[i];
  grads.encoder = backward(policy.encoder, pass.encoder_tape, d_features).grads;
  return grads;
}

}  // namespace sero
