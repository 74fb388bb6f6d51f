#include "sero/learner.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sero/errors.hpp"

namespace sero {

namespace {

constexpr double kTanhEps = 1e-6;
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

Matrix concat_columns(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) throw ShapeError("concat: row mismatch");
  Matrix out(a.rows, a.cols + b.cols);
  for (std::size_t r = 0; r < a.rows; ++r) {
    std::copy(a.row(r).begin(), a.row(r).end(), out.row(r).begin());
    std::copy(b.row(r).begin(), b.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(a.cols));
  }
  return out;
}

Matrix draw_noise(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix z(rows, cols);
  for (double& v : z.data) v = standard_normal(rng);
  return z;
}

// Reparameterized squashed sample and its log density.
struct SquashedSample {
  Matrix u;
  Matrix action;
  Vector log_prob;
};

SquashedSample squash(const PolicyPass& pass, const Matrix& noise) {
  if (noise.rows != pass.mu.rows || noise.cols != pass.mu.cols) throw ShapeError("noise shape mismatch");
  SquashedSample s{Matrix(noise.rows, noise.cols), Matrix(noise.rows, noise.cols), Vector(noise.rows, 0.0)};
  for (std::size_t b = 0; b < noise.rows; ++b) {
    double lp = 0.0;
    for (std::size_t k = 0; k < noise.cols; ++k) {
      const double z = noise(b, k);
      const double u = pass.mu(b, k) + pass.sigma(b, k) * z;
      const double t = std::tanh(u);
      s.u(b, k) = u;
      s.action(b, k) = t;
      lp += -0.5 * z * z - pass.logstd(b, k) - kHalfLog2Pi - std::log(1.0 - t * t + kTanhEps);
    }
    s.log_prob[b] = lp;
  }
  return s;
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + what);
}

}  // namespace

std::string to_string(RewardMode mode) {
  switch (mode) {
    case RewardMode::env_only: return "env_only";
    case RewardMode::zero_ood: return "zero_ood";
    case RewardMode::aux_manual: return "aux_manual";
    case RewardMode::aux_own_criterion: return "aux_own_criterion";
  }
  return "env_only";
}

RewardMode parse_reward_mode(const std::string& name) {
  if (name == "env_only") return RewardMode::env_only;
  if (name == "zero_ood") return RewardMode::zero_ood;
  if (name == "aux_manual") return RewardMode::aux_manual;
  if (name == "aux_own_criterion") return RewardMode::aux_own_criterion;
  throw ConfigError("unknown reward mode '" + name + "'");
}

void LearnerConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in (0, 1]");
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in (0, 1]");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (mc_passes < 2) throw ConfigError("mc_passes must be at least 2");
  if (buffer_capacity == 0) throw ConfigError("buffer_capacity must be positive");
  if (hidden.empty()) throw ConfigError("encoder needs at least one hidden layer");
  if (feature_dim == 0) throw ConfigError("feature_dim must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

// ReplayBuffer

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay capacity must be positive");
  storage_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
  if (storage_.size() < capacity_) {
    storage_.push_back(std::move(t));
    return;
  }
  storage_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

void ReplayBuffer::clear() {
  storage_.clear();
  head_ = 0;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= storage_.size()) throw std::out_of_range("replay index");
  return storage_[(head_ + i) % storage_.size()];
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (storage_.empty()) throw StateError("cannot sample from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, storage_.size() - 1);
  std::vector<const Transition*> out(n);
  for (auto& p : out) p = &storage_[pick(rng)];
  return out;
}

Batch Batch::from(const std::vector<const Transition*>& transitions) {
  if (transitions.empty()) throw StateError("empty batch");
  const std::size_t n = transitions.size();
  const std::size_t obs = transitions.front()->state.size();
  const std::size_t act = transitions.front()->action.size();
  Batch b{Matrix(n, obs), Matrix(n, act), Matrix(n, obs), Vector(n), Vector(n), Vector(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const Transition& t = *transitions[i];
    if (t.state.size() != obs || t.next_state.size() != obs || t.action.size() != act) {
      throw ShapeError("transition dimensions differ within batch");
    }
    std::copy(t.state.begin(), t.state.end(), b.states.row(i).begin());
    std::copy(t.action.begin(), t.action.end(), b.actions.row(i).begin());
    std::copy(t.next_state.begin(), t.next_state.end(), b.next_states.row(i).begin());
    b.rewards[i] = t.effective_reward;
    b.dones[i] = t.done ? 1.0 : 0.0;
    b.d_u[i] = t.d_u_state;
  }
  return b;
}

// SacState

SacState SacState::create(std::size_t obs_dim, std::size_t action_dim, const LearnerConfig& cfg, Rng& rng) {
  cfg.validate();
  SacState s;
  s.policy = GaussianPolicy::create(obs_dim, action_dim, cfg.hidden, cfg.feature_dim, cfg.dropout, rng);
  s.critic1 = MlpParams::create(obs_dim + action_dim, cfg.hidden, 1, 0.0, rng);
  s.critic2 = MlpParams::create(obs_dim + action_dim, cfg.hidden, 1, 0.0, rng);
  s.target1 = s.critic1;
  s.target2 = s.critic2;
  s.tracker = UncertaintyTracker(cfg.feature_dim);
  s.reset_optimizers();
  return s;
}

void SacState::freeze_original(const GaussianPolicy& p) {
  if (original_policy) throw StateError("original policy is already frozen");
  original_policy = std::make_shared<const GaussianPolicy>(p);
}

void SacState::reset_optimizers() {
  policy_opt.encoder = AdamState::zeros_like(policy.encoder);
  policy_opt.mu_head = AdamState::zeros_like(policy.mu_head);
  policy_opt.logstd_head = AdamState::zeros_like(policy.logstd_head);
  critic1_opt = AdamState::zeros_like(critic1);
  critic2_opt = AdamState::zeros_like(critic2);
}

double select_reward(RewardMode mode, bool in_dist_state, double d_u_state, double env_reward, double d_u_next,
                     const LearnerConfig& cfg) {
  switch (mode) {
    case RewardMode::env_only: return env_reward;
    case RewardMode::zero_ood: return in_dist_state ? env_reward : 0.0;
    case RewardMode::aux_manual: return in_dist_state ? env_reward : cfg.lambda * auxiliary_reward(d_u_next);
    case RewardMode::aux_own_criterion:
      return d_u_state < cfg.epsilon ? env_reward : cfg.lambda * auxiliary_reward(d_u_next);
  }
  return env_reward;
}

// Critic

Vector critic_targets(const SacState& sac, const Batch& batch, const LearnerConfig& cfg, const Matrix& noise) {
  const PolicyPass next = policy_forward(sac.policy, batch.next_states);
  const SquashedSample s = squash(next, noise);
  const Matrix next_in = concat_columns(batch.next_states, s.action);
  const Matrix q1 = forward_batch(sac.target1, next_in);
  const Matrix q2 = forward_batch(sac.target2, next_in);
  Vector y(batch.size());
  for (std::size_t b = 0; b < y.size(); ++b) {
    const double soft_value = std::min(q1.data[b], q2.data[b]) - cfg.alpha * s.log_prob[b];
    y[b] = batch.rewards[b] + cfg.gamma * (1.0 - batch.dones[b]) * soft_value;
  }
  return y;
}

ValueAndGradients critic_objective(const MlpParams& critic, const Batch& batch, const Vector& targets) {
  const Matrix input = concat_columns(batch.states, batch.actions);
  const double n = static_cast<double>(batch.size());
  return gradients(
      [&](const Matrix& q, Matrix& dq) {
        double loss = 0.0;
        for (std::size_t b = 0; b < q.rows; ++b) {
          const double err = q.data[b] - targets[b];
          loss += 0.5 * err * err;
          dq.data[b] = err / n;
        }
        return loss / n;
      },
      critic, input);
}

CriticLosses critic_update(SacState& sac, const Batch& batch, const LearnerConfig& cfg, Rng& rng) {
  const Matrix noise = draw_noise(batch.size(), sac.policy.action_dim, rng);
  const Vector y = critic_targets(sac, batch, cfg, noise);
  auto r1 = critic_objective(sac.critic1, batch, y);
  auto r2 = critic_objective(sac.critic2, batch, y);
  check_finite(r1.value, "critic loss");
  check_finite(r2.value, "critic loss");
  adam_step(sac.critic1, r1.grads, sac.critic1_opt, cfg.lr);
  adam_step(sac.critic2, r2.grads, sac.critic2_opt, cfg.lr);
  return {r1.value, r2.value};
}

// Policy

PolicyObjective policy_objective(const SacState& sac, const Batch& batch, const LearnerConfig& cfg,
                                 const Matrix& noise) {
  if (cfg.upc && !sac.original_policy) throw ConfigError("consolidation enabled without an original policy");
  const std::size_t n = batch.size();
  const std::size_t k = sac.policy.action_dim;
  const std::size_t obs = batch.states.cols;
  const double inv_n = 1.0 / static_cast<double>(n);

  const PolicyPass pass = policy_forward(sac.policy, batch.states);
  const SquashedSample s = squash(pass, noise);
  const Matrix critic_in = concat_columns(batch.states, s.action);
  MlpTape tape1;
  MlpTape tape2;
  const Matrix q1 = forward_batch(sac.critic1, critic_in, nullptr, &tape1);
  const Matrix q2 = forward_batch(sac.critic2, critic_in, nullptr, &tape2);

  std::optional<PolicyPass> org;
  if (cfg.upc) org = policy_forward(*sac.original_policy, batch.states);

  PolicyObjective out;
  Matrix dq1(n, 1);
  Matrix dq2(n, 1);
  Matrix d_mu(n, k);
  Matrix d_logstd(n, k);
  for (std::size_t b = 0; b < n; ++b) {
    const bool first = q1.data[b] <= q2.data[b];
    const double min_q = first ? q1.data[b] : q2.data[b];
    (first ? dq1 : dq2).data[b] = -inv_n;
    out.loss.entropy_term += cfg.alpha * s.log_prob[b];
    out.loss.q_term += min_q;
    for (std::size_t j = 0; j < k; ++j) {
      const double t = s.action(b, j);
      const double one_minus = 1.0 - t * t;
      const double corr = 2.0 * t * one_minus / (one_minus + kTanhEps);
      const double sz = pass.sigma(b, j) * noise(b, j);
      d_mu(b, j) = cfg.alpha * inv_n * corr;
      d_logstd(b, j) = cfg.alpha * inv_n * (corr * sz - 1.0);
    }
    if (org) {
      const double weight = 1.0 - batch.d_u[b];
      double kl = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double so = org->sigma(b, j);
        const double sp = pass.sigma(b, j);
        const double diff = pass.mu(b, j) - org->mu(b, j);
        kl += std::log(so / sp) + (sp * sp + diff * diff) / (2.0 * so * so) - 0.5;
        d_mu(b, j) += weight * inv_n * diff / (so * so);
        d_logstd(b, j) += weight * inv_n * (sp * sp / (so * so) - 1.0);
      }
      out.loss.consolidation += weight * kl;
    }
  }
  out.loss.entropy_term *= inv_n;
  out.loss.q_term *= inv_n;
  out.loss.consolidation *= inv_n;
  out.loss.total = out.loss.entropy_term - out.loss.q_term + out.loss.consolidation;
  check_finite(out.loss.total, "policy loss");

  // Critic gradients flow into the policy through the action columns only.
  const auto back1 = backward(sac.critic1, tape1, dq1, false);
  const auto back2 = backward(sac.critic2, tape2, dq2, false);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t j = 0; j < k; ++j) {
      const double dq_da = back1.input_grad(b, obs + j) + back2.input_grad(b, obs + j);
      const double t = s.action(b, j);
      const double dq_du = dq_da * (1.0 - t * t);
      d_mu(b, j) += dq_du;
      d_logstd(b, j) += dq_du * pass.sigma(b, j) * noise(b, j);
    }
  }
  out.grads = policy_backward(sac.policy, pass, d_mu, d_logstd);
  return out;
}

PolicyLoss policy_update(SacState& sac, const Batch& batch, const LearnerConfig& cfg, Rng& rng) {
  const Matrix noise = draw_noise(batch.size(), sac.policy.action_dim, rng);
  PolicyObjective obj = policy_objective(sac, batch, cfg, noise);
  adam_step(sac.policy.encoder, obj.grads.encoder, sac.policy_opt.encoder, cfg.lr);
  adam_step(sac.policy.mu_head, obj.grads.mu_head, sac.policy_opt.mu_head, cfg.lr);
  adam_step(sac.policy.logstd_head, obj.grads.logstd_head, sac.policy_opt.logstd_head, cfg.lr);
  return obj.loss;
}

void target_update(SacState& sac, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in (0, 1]");
  auto blend = [tau](const MlpParams& src, MlpParams& dst) {
    auto s = parameter_blocks(src.layers);
    auto d = parameter_blocks(dst.layers);
    if (s.size() != d.size()) throw ShapeError("target network is not congruent with its critic");
    for (std::size_t k = 0; k < s.size(); ++k) {
      for (std::size_t i = 0; i < s[k].size(); ++i) d[k][i] = tau * s[k][i] + (1.0 - tau) * d[k][i];
    }
  };
  blend(sac.critic1, sac.target1);
  blend(sac.critic2, sac.target2);
}

// Collection

RngStreams RngStreams::from_seed(std::uint64_t seed, std::uint64_t salt) {
  const std::uint64_t base = 16 * salt;
  return {make_rng(seed, base + 1), make_rng(seed, base + 2), make_rng(seed, base + 3), make_rng(seed, base + 4)};
}

const MlpParams& uncertainty_encoder(const SacState& sac, Phase phase) {
  if (phase == Phase::retraining && sac.original_policy) return sac.original_policy->encoder;
  return sac.policy.encoder;
}

Rollout begin_episode(SacState& sac, Environment& env, Phase phase, const LearnerConfig& cfg, RngStreams& rng) {
  Rollout r;
  r.obs = env.reset(phase, rng.env);
  r.in_dist = env.in_distribution();
  r.sigma_u = mc_uncertainty(uncertainty_encoder(sac, phase), r.obs, cfg.mc_passes, rng.uncertainty);
  update_sigma_max(sac.tracker, r.sigma_u);
  r.finished = false;
  return r;
}

StepRecord collect_step(SacState& sac, Environment& env, Rollout& rollout, Phase phase, const LearnerConfig& cfg,
                        RngStreams& rng, bool uniform_action) {
  if (rollout.finished) throw StateError("collect_step on a finished episode");
  StepRecord rec;
  Transition& t = rec.transition;
  t.state = rollout.obs;
  t.in_dist_state = rollout.in_dist;
  if (uniform_action) {
    t.action.resize(env.action_dim());
    for (double& a : t.action) a = uniform(rng.action, -1.0, 1.0);
  } else {
    t.action = act(sac.policy, rollout.obs, ActMode::stochastic, rng.action);
  }
  const StepResult step = env.step(t.action);
  rec.terminated = step.terminated;
  rec.truncated = step.truncated;
  t.env_reward = step.env_reward;
  t.next_state = step.observation;
  t.in_dist_next = step.in_distribution;
  t.done = step.terminated;

  rec.sigma_u_state = rollout.sigma_u;
  rec.sigma_u_next = mc_uncertainty(uncertainty_encoder(sac, phase), step.observation, cfg.mc_passes,
                                    rng.uncertainty);
  if (phase == Phase::retraining) t.d_u_state = uncertainty_distance(sac.tracker, rec.sigma_u_state);
  update_sigma_max(sac.tracker, rec.sigma_u_next);
  if (phase == Phase::retraining) t.d_u_next = uncertainty_distance(sac.tracker, rec.sigma_u_next);

  t.effective_reward = phase == Phase::training
                           ? t.env_reward
                           : select_reward(cfg.reward_mode, t.in_dist_state, t.d_u_state, t.env_reward,
                                           t.d_u_next, cfg);

  rollout.obs = step.observation;
  rollout.sigma_u = rec.sigma_u_next;
  rollout.in_dist = step.in_distribution;
  rollout.finished = step.terminated || step.truncated;
  return rec;
}

}  // namespace sero
