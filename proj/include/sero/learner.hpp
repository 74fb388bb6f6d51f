#pragma once

// Soft actor-critic with twin critics and target networks, extended with the
// reward switch between environment and auxiliary rewards and the
// uncertainty-weighted consolidation term toward a frozen original policy.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sero/envs.hpp"
#include "sero/policy.hpp"
#include "sero/uncertainty.hpp"

namespace sero {

enum class RewardMode { env_only, zero_ood, aux_manual, aux_own_criterion };

std::string to_string(RewardMode mode);
RewardMode parse_reward_mode(const std::string& name);

struct LearnerConfig {
  double gamma = 0.99;
  double tau = 0.005;
  double alpha = 0.2;
  double lambda = 1.0;
  double epsilon = 0.5;
  double lr = 3e-4;
  std::size_t batch_size = 64;
  std::size_t mc_passes = 10;
  bool upc = false;
  RewardMode reward_mode = RewardMode::env_only;
  std::size_t buffer_capacity = 1'000'000;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t feature_dim = 64;
  double dropout = 0.1;

  void validate() const;
  bool operator==(const LearnerConfig&) const = default;
};

struct Transition {
  Vector state;
  Vector action;
  double env_reward = 0.0;
  double effective_reward = 0.0;
  Vector next_state;
  bool done = false;  // genuine termination only
  double d_u_state = 0.0;
  double d_u_next = 0.0;
  bool in_dist_state = true;
  bool in_dist_next = true;
};

/// Bounded FIFO of transitions with uniform sampling (with replacement).
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return storage_.size(); }
  std::size_t capacity() const { return capacity_; }
  void clear();

  /// i-th oldest stored transition.
  const Transition& at(std::size_t i) const;
  std::vector<const Transition*> sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // index of the oldest element once full
  std::vector<Transition> storage_;
};

/// Column-stacked view of sampled transitions.
struct Batch {
  Matrix states;
  Matrix actions;
  Matrix next_states;
  Vector rewards;
  Vector dones;
  Vector d_u;

  static Batch from(const std::vector<const Transition*>& transitions);
  std::size_t size() const { return rewards.size(); }
};

struct PolicyOptimizer {
  AdamState encoder;
  AdamState mu_head;
  AdamState logstd_head;
};

struct SacState {
  GaussianPolicy policy;
  MlpParams critic1;
  MlpParams critic2;
  MlpParams target1;
  MlpParams target2;
  PolicyOptimizer policy_opt;
  AdamState critic1_opt;
  AdamState critic2_opt;
  std::shared_ptr<const GaussianPolicy> original_policy;
  UncertaintyTracker tracker;

  static SacState create(std::size_t obs_dim, std::size_t action_dim, const LearnerConfig& cfg, Rng& rng);

  /// Freezes a copy of `policy` as the consolidation anchor. Throws StateError if already set.
  void freeze_original(const GaussianPolicy& policy);
  /// Fresh optimizer moments for every network.
  void reset_optimizers();
};

double select_reward(RewardMode mode, bool in_dist_state, double d_u_state, double env_reward, double d_u_next,
                     const LearnerConfig& cfg);

struct CriticLosses {
  double critic1 = 0.0;
  double critic2 = 0.0;
};

/// Soft Bellman targets from the target critics; both critics take one Adam step.
CriticLosses critic_update(SacState& sac, const Batch& batch, const LearnerConfig& cfg, Rng& rng);

struct PolicyLoss {
  double total = 0.0;
  double entropy_term = 0.0;   // mean alpha * log pi
  double q_term = 0.0;         // mean min Q
  double consolidation = 0.0;  // mean (1 - d_u) * KL(pi || pi_org)
};

PolicyLoss policy_update(SacState& sac, const Batch& batch, const LearnerConfig& cfg, Rng& rng);

/// Policy objective and its gradients without applying them (used for gradient checks).
struct PolicyObjective {
  PolicyLoss loss;
  PolicyGradients grads;
};
PolicyObjective policy_objective(const SacState& sac, const Batch& batch, const LearnerConfig& cfg,
                                 const Matrix& noise);

/// Per-critic loss 0.5 * mean (Q - y)^2 on fixed targets, with gradients.
ValueAndGradients critic_objective(const MlpParams& critic, const Batch& batch, const Vector& targets);
Vector critic_targets(const SacState& sac, const Batch& batch, const LearnerConfig& cfg, const Matrix& noise);

void target_update(SacState& sac, double tau);

/// Independent random streams so the subsystems never perturb each other.
struct RngStreams {
  Rng env;
  Rng action;
  Rng uncertainty;
  Rng update;

  /// `salt` separates the streams of different phases run under the same seed.
  static RngStreams from_seed(std::uint64_t seed, std::uint64_t salt = 0);
};

/// Per-episode collection state carried between collect_step calls.
struct Rollout {
  Vector obs;
  Vector sigma_u;
  bool in_dist = true;
  bool finished = true;
};

struct StepRecord {
  Transition transition;
  Vector sigma_u_state;
  Vector sigma_u_next;
  bool terminated = false;
  bool truncated = false;
};

/// Encoder whose dropout variance measures uncertainty in `phase`: the frozen
/// original policy while retraining, the current policy while training.
const MlpParams& uncertainty_encoder(const SacState& sac, Phase phase);

Rollout begin_episode(SacState& sac, Environment& env, Phase phase, const LearnerConfig& cfg, RngStreams& rng);

/// One environment step; updates the tracker with the next state's uncertainty.
StepRecord collect_step(SacState& sac, Environment& env, Rollout& rollout, Phase phase, const LearnerConfig& cfg,
                        RngStreams& rng, bool uniform_action = false);

}  // namespace sero
