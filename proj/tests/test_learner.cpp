#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "sero/errors.hpp"
#include "sero/learner.hpp"
#include "support.hpp"

namespace sero {
namespace {

// Scalar re-evaluation of a relu MLP without dropout, used as an oracle.
Vector eval_by_hand(const MlpParams& net, Vector x) {
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const DenseLayer& l = net.layers[k];
    Vector y(l.weight.rows);
    for (std::size_t j = 0; j < l.weight.rows; ++j) {
      double s = l.bias[j];
      for (std::size_t i = 0; i < l.weight.cols; ++i) s += l.weight(j, i) * x[i];
      if (k + 1 < net.layers.size()) s = s > 0.0 ? s : 0.0;
      y[j] = s;
    }
    x = std::move(y);
  }
  return x;
}

struct HandPolicy {
  double mu;
  double sigma;
};

HandPolicy hand_policy(const GaussianPolicy& p, const Vector& s) {
  const Vector f = eval_by_hand(p.encoder, s);
  const double mu = eval_by_hand(p.mu_head, f)[0];
  const double ls = std::clamp(eval_by_hand(p.logstd_head, f)[0], -20.0, 2.0);
  return {mu, std::exp(ls)};
}

double hand_log_prob(const HandPolicy& h, double z) {
  const double u = h.mu + h.sigma * z;
  const double t = std::tanh(u);
  return -0.5 * z * z - std::log(h.sigma) - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(1.0 - t * t + 1e-6);
}

double hand_q(const MlpParams& critic, const Vector& s, double a) {
  Vector in = s;
  in.push_back(a);
  return eval_by_hand(critic, in)[0];
}

LearnerConfig tiny_config() {
  LearnerConfig cfg;
  cfg.hidden = {3};
  cfg.feature_dim = 2;
  cfg.batch_size = 1;
  cfg.dropout = 0.2;
  return cfg;
}

Transition make_transition(Vector s, double a, double r, Vector s2, bool done = false, double du = 0.0) {
  Transition t;
  t.state = std::move(s);
  t.action = {a};
  t.env_reward = r;
  t.effective_reward = r;
  t.next_state = std::move(s2);
  t.done = done;
  t.d_u_state = du;
  return t;
}

Batch single_batch(const Transition& t) { return Batch::from({&t}); }

SacState tiny_sac(std::uint64_t seed, const LearnerConfig& cfg) {
  Rng rng = make_rng(seed);
  return SacState::create(2, 1, cfg, rng);
}

TEST(SelectReward, ManualCriterion) {
  LearnerConfig cfg;
  cfg.lambda = 1.0;
  EXPECT_EQ(select_reward(RewardMode::aux_manual, true, 0.9, 1.3, 0.4, cfg), 1.3);
  EXPECT_EQ(select_reward(RewardMode::aux_manual, false, 0.9, 1.3, 0.4, cfg), -0.4);
  cfg.lambda = 2.5;
  EXPECT_EQ(select_reward(RewardMode::aux_manual, false, 0.9, 1.3, 0.4, cfg), -1.0);
}

TEST(SelectReward, OwnCriterion) {
  LearnerConfig cfg;
  cfg.epsilon = 0.5;
  EXPECT_EQ(select_reward(RewardMode::aux_own_criterion, false, 0.2, 1.3, 0.7, cfg), 1.3);
  EXPECT_EQ(select_reward(RewardMode::aux_own_criterion, true, 0.5, 1.3, 0.7, cfg), -0.7);
  cfg.epsilon = 1.0;
  EXPECT_EQ(select_reward(RewardMode::aux_own_criterion, false, 0.999, 1.3, 0.7, cfg), 1.3);
  EXPECT_EQ(select_reward(RewardMode::aux_own_criterion, false, 1.0, 1.3, 1.0, cfg), -1.0);
}

TEST(SelectReward, BaselineModes) {
  const LearnerConfig cfg;
  EXPECT_EQ(select_reward(RewardMode::zero_ood, true, 0.9, -0.7, 0.4, cfg), -0.7);
  EXPECT_EQ(select_reward(RewardMode::zero_ood, false, 0.9, -0.7, 0.4, cfg), 0.0);
  EXPECT_EQ(select_reward(RewardMode::env_only, false, 0.9, -0.7, 0.4, cfg), -0.7);
}

TEST(SelectReward, ModesAgreeInDistributionBelowThreshold) {
  Rng rng = make_rng(1);
  LearnerConfig cfg;
  cfg.epsilon = 0.4;
  cfg.lambda = 1.7;
  for (int i = 0; i < 1000; ++i) {
    const double du = uniform(rng, 0.0, 0.3999);
    const double re = uniform(rng, -3.0, 3.0);
    const double dn = uniform(rng, 0.0, 1.0);
    for (RewardMode m : {RewardMode::env_only, RewardMode::zero_ood, RewardMode::aux_manual,
                         RewardMode::aux_own_criterion}) {
      EXPECT_EQ(select_reward(m, true, du, re, dn, cfg), re);
    }
  }
}

TEST(Config, Ranges) {
  LearnerConfig cfg;
  cfg.tau = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.gamma = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.alpha = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.mc_passes = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.epsilon = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_NO_THROW(LearnerConfig{}.validate());
}

TEST(ReplayBuffer, FifoEvictionAndCapacity) {
  ReplayBuffer buf(3);
  for (int i = 0; i < 7; ++i) {
    buf.push(make_transition({double(i), 0.0}, 0.0, double(i), {0.0, 0.0}));
    EXPECT_LE(buf.size(), 3u);
  }
  EXPECT_EQ(buf.size(), 3u);
  EXPECT_EQ(buf.at(0).env_reward, 4.0);
  EXPECT_EQ(buf.at(1).env_reward, 5.0);
  EXPECT_EQ(buf.at(2).env_reward, 6.0);
  EXPECT_THROW(buf.at(3), std::out_of_range);
}

TEST(ReplayBuffer, UniformSamplingWithReplacement) {
  ReplayBuffer buf(4);
  for (int i = 0; i < 4; ++i) buf.push(make_transition({0.0, 0.0}, 0.0, double(i), {0.0, 0.0}));
  Rng rng = make_rng(2);
  std::vector<int> counts(4, 0);
  const auto picks = buf.sample(40000, rng);
  for (const Transition* t : picks) ++counts[static_cast<std::size_t>(t->env_reward)];
  for (int c : counts) EXPECT_NEAR(c / 40000.0, 0.25, 0.01);
  ReplayBuffer empty(2);
  EXPECT_THROW(empty.sample(1, rng), StateError);
}

TEST(CriticTargets, ZeroDiscountGivesRewards) {
  LearnerConfig cfg = tiny_config();
  cfg.gamma = 0.0;
  const SacState sac = tiny_sac(3, cfg);
  std::vector<Transition> ts;
  for (int i = 0; i < 5; ++i) ts.push_back(make_transition({0.1 * i, -0.2}, 0.3, 1.0, {0.5, 0.5}));
  std::vector<const Transition*> ptrs;
  for (const auto& t : ts) ptrs.push_back(&t);
  const Batch b = Batch::from(ptrs);
  Rng rng = make_rng(4);
  const Matrix noise = testing::random_matrix(5, 1, rng);
  const Vector y = critic_targets(sac, b, cfg, noise);
  for (double v : y) EXPECT_EQ(v, 1.0);
}

TEST(CriticTargets, TerminalTransitionsDoNotBootstrap) {
  const LearnerConfig cfg = tiny_config();
  const SacState sac = tiny_sac(5, cfg);
  const Transition t1 = make_transition({0.1, 0.2}, 0.3, -0.75, {9.0, -4.0}, true);
  const Transition t2 = make_transition({0.1, 0.2}, 0.3, -0.75, {-3.0, 2.0}, true);
  Matrix noise(1, 1, 0.3);
  EXPECT_EQ(critic_targets(sac, single_batch(t1), cfg, noise)[0], -0.75);
  EXPECT_EQ(critic_targets(sac, single_batch(t2), cfg, noise)[0], -0.75);
}

TEST(CriticUpdate, LossMatchesHandEvaluation) {
  LearnerConfig cfg = tiny_config();
  cfg.gamma = 0.9;
  cfg.alpha = 0.3;
  SacState sac = tiny_sac(6, cfg);
  // Make the targets differ from the critics so min() is exercised.
  for (auto block : parameter_blocks(sac.target2.layers)) {
    for (double& v : block) v *= 0.5;
  }
  const Vector s{0.4, -0.6};
  const Vector s2{0.45, -0.5};
  const double a = 0.2;
  const double r = -0.3;
  const Transition t = make_transition(s, a, r, s2);
  Rng rng = make_rng(7);
  Rng peek = rng;
  const double z = standard_normal(peek);

  const HandPolicy hp = hand_policy(sac.policy, s2);
  const double a2 = std::tanh(hp.mu + hp.sigma * z);
  const double soft = std::min(hand_q(sac.target1, s2, a2), hand_q(sac.target2, s2, a2)) -
                      cfg.alpha * hand_log_prob(hp, z);
  const double y = r + cfg.gamma * soft;
  const double e1 = hand_q(sac.critic1, s, a) - y;
  const double e2 = hand_q(sac.critic2, s, a) - y;

  const SacState before = sac;
  const CriticLosses losses = critic_update(sac, single_batch(t), cfg, rng);
  EXPECT_NEAR(losses.critic1, 0.5 * e1 * e1, 1e-12);
  EXPECT_NEAR(losses.critic2, 0.5 * e2 * e2, 1e-12);
  EXPECT_NE(sac.critic1, before.critic1);
  EXPECT_NE(sac.critic2, before.critic2);
  EXPECT_EQ(sac.policy, before.policy);
  EXPECT_EQ(sac.target1, before.target1);
}

TEST(CriticObjective, GradientMatchesCentralDifferences) {
  LearnerConfig cfg;
  cfg.hidden = {16, 16};
  Rng rng = make_rng(8);
  const SacState sac = SacState::create(3, 2, cfg, rng);
  std::vector<Transition> ts;
  for (int i = 0; i < 8; ++i) {
    Transition t;
    t.state = testing::random_vector(3, rng);
    t.action = testing::random_vector(2, rng);
    t.next_state = testing::random_vector(3, rng);
    t.effective_reward = uniform(rng, -1, 1);
    ts.push_back(t);
  }
  std::vector<const Transition*> ptrs;
  for (const auto& t : ts) ptrs.push_back(&t);
  const Batch b = Batch::from(ptrs);
  const Vector y = testing::random_vector(8, rng);
  const auto vg = critic_objective(sac.critic1, b, y);
  const auto numeric = testing::central_differences(sac.critic1.layers, [&](const std::vector<DenseLayer>& layers) {
    MlpParams c = sac.critic1;
    c.layers = layers;
    return critic_objective(c, b, y).value;
  });
  const auto cmp = testing::compare_gradients(vg.grads.layers, numeric);
  EXPECT_GT(cmp.compared, 50u);
  EXPECT_LT(cmp.worst_relative, 1e-4);
}

class PolicyObjectiveTest : public ::testing::Test {
 protected:
  void SetUp() override {
    cfg = tiny_config();
    cfg.alpha = 0.25;
    sac = tiny_sac(9, cfg);
    Rng rng = make_rng(10);
    GaussianPolicy org = sac.policy;
    for (auto block : parameter_blocks(org.mu_head.layers)) {
      for (double& v : block) v += uniform(rng, -0.5, 0.5);
    }
    for (auto block : parameter_blocks(org.logstd_head.layers)) {
      for (double& v : block) v += uniform(rng, -0.5, 0.5);
    }
    sac.freeze_original(org);
  }

  LearnerConfig cfg;
  SacState sac;
};

TEST_F(PolicyObjectiveTest, LossMatchesHandEvaluation) {
  cfg.upc = true;
  const Vector s{0.3, 0.7};
  const double du = 0.35;
  const Transition t = make_transition(s, 0.0, 0.0, s, false, du);
  const double z = -0.4;
  const Matrix noise(1, 1, z);

  const HandPolicy hp = hand_policy(sac.policy, s);
  const HandPolicy ho = hand_policy(*sac.original_policy, s);
  const double a = std::tanh(hp.mu + hp.sigma * z);
  const double min_q = std::min(hand_q(sac.critic1, s, a), hand_q(sac.critic2, s, a));
  const double kl = std::log(ho.sigma / hp.sigma) +
                    (hp.sigma * hp.sigma + (hp.mu - ho.mu) * (hp.mu - ho.mu)) / (2.0 * ho.sigma * ho.sigma) - 0.5;
  const double expected = cfg.alpha * hand_log_prob(hp, z) - min_q + (1.0 - du) * kl;

  const PolicyObjective obj = policy_objective(sac, single_batch(t), cfg, noise);
  EXPECT_NEAR(obj.loss.total, expected, 1e-12);
  EXPECT_NEAR(obj.loss.consolidation, (1.0 - du) * kl, 1e-12);
  EXPECT_NEAR(obj.loss.q_term, min_q, 1e-12);
}

TEST_F(PolicyObjectiveTest, GradientMatchesCentralDifferences) {
  cfg.upc = true;
  Rng rng = make_rng(11);
  std::vector<Transition> ts;
  for (int i = 0; i < 6; ++i) ts.push_back(make_transition(testing::random_vector(2, rng), 0.0, 0.0, {0.0, 0.0}, false, uniform(rng, 0, 1)));
  std::vector<const Transition*> ptrs;
  for (const auto& t : ts) ptrs.push_back(&t);
  const Batch b = Batch::from(ptrs);
  const Matrix noise = testing::random_matrix(6, 1, rng, -1.5, 1.5);
  const PolicyObjective obj = policy_objective(sac, b, cfg, noise);

  const std::pair<MlpParams GaussianPolicy::*, const GradientSet*> nets[] = {
      {&GaussianPolicy::encoder, &obj.grads.encoder},
      {&GaussianPolicy::mu_head, &obj.grads.mu_head},
      {&GaussianPolicy::logstd_head, &obj.grads.logstd_head}};
  for (const auto& [member, analytic] : nets) {
    const auto numeric = testing::central_differences((sac.policy.*member).layers, [&](const std::vector<DenseLayer>& layers) {
      SacState copy = sac;
      (copy.policy.*member).layers = layers;
      return policy_objective(copy, b, cfg, noise).loss.total;
    });
    const auto cmp = testing::compare_gradients(analytic->layers, numeric);
    EXPECT_GT(cmp.compared, 0u);
    EXPECT_LT(cmp.worst_relative, 1e-4);
  }
}

TEST_F(PolicyObjectiveTest, FullUncertaintyRemovesConsolidation) {
  const Transition t = make_transition({0.3, 0.7}, 0.0, 0.0, {0.3, 0.7}, false, 1.0);
  const Matrix noise(1, 1, 0.8);
  LearnerConfig off = cfg;
  off.upc = false;
  LearnerConfig on = cfg;
  on.upc = true;
  const PolicyObjective a = policy_objective(sac, single_batch(t), off, noise);
  const PolicyObjective b = policy_objective(sac, single_batch(t), on, noise);
  EXPECT_EQ(b.loss.consolidation, 0.0);
  EXPECT_EQ(a.loss.total, b.loss.total);
  EXPECT_EQ(a.grads.encoder.layers, b.grads.encoder.layers);
  EXPECT_EQ(a.grads.mu_head.layers, b.grads.mu_head.layers);
  EXPECT_EQ(a.grads.logstd_head.layers, b.grads.logstd_head.layers);
}

TEST_F(PolicyObjectiveTest, ZeroUncertaintyAddsUnscaledKlGradient) {
  Rng rng = make_rng(12);
  std::vector<Transition> ts;
  for (int i = 0; i < 4; ++i) ts.push_back(make_transition(testing::random_vector(2, rng), 0.0, 0.0, {0.0, 0.0}, false, 0.0));
  std::vector<const Transition*> ptrs;
  for (const auto& t : ts) ptrs.push_back(&t);
  const Batch b = Batch::from(ptrs);
  const Matrix noise = testing::random_matrix(4, 1, rng);
  LearnerConfig off = cfg;
  off.upc = false;
  LearnerConfig on = cfg;
  on.upc = true;
  const PolicyObjective a = policy_objective(sac, b, off, noise);
  const PolicyObjective c = policy_objective(sac, b, on, noise);

  auto mean_kl = [&](const GaussianPolicy& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      s += kl_divergence(distribution(p, b.states.row(i)), distribution(*sac.original_policy, b.states.row(i)));
    }
    return s / static_cast<double>(b.size());
  };
  EXPECT_NEAR(c.loss.consolidation, mean_kl(sac.policy), 1e-12);

  GradientSet diff = c.grads.mu_head;
  diff.add(a.grads.mu_head, -1.0);
  const auto numeric = testing::central_differences(sac.policy.mu_head.layers, [&](const std::vector<DenseLayer>& layers) {
    GaussianPolicy p = sac.policy;
    p.mu_head.layers = layers;
    return mean_kl(p);
  });
  const auto cmp = testing::compare_gradients(diff.layers, numeric);
  EXPECT_GT(cmp.compared, 0u);
  EXPECT_LT(cmp.worst_relative, 1e-5);

  GradientSet diff_ls = c.grads.logstd_head;
  diff_ls.add(a.grads.logstd_head, -1.0);
  const auto numeric_ls = testing::central_differences(sac.policy.logstd_head.layers, [&](const std::vector<DenseLayer>& layers) {
    GaussianPolicy p = sac.policy;
    p.logstd_head.layers = layers;
    return mean_kl(p);
  });
  EXPECT_LT(testing::compare_gradients(diff_ls.layers, numeric_ls).worst_relative, 1e-5);
}

TEST(PolicyObjective, IdenticalOriginalHasNoConsolidation) {
  LearnerConfig cfg = tiny_config();
  cfg.upc = true;
  SacState sac = tiny_sac(13, cfg);
  sac.freeze_original(sac.policy);
  const Transition t = make_transition({0.1, 0.9}, 0.0, 0.0, {0.0, 0.0}, false, 0.0);
  const PolicyObjective obj = policy_objective(sac, single_batch(t), cfg, Matrix(1, 1, 0.2));
  EXPECT_EQ(obj.loss.consolidation, 0.0);
}

TEST(PolicyObjective, DisabledConsolidationIsExactlyZero) {
  LearnerConfig cfg = tiny_config();
  SacState sac = tiny_sac(14, cfg);
  const Transition t = make_transition({0.1, 0.9}, 0.0, 0.0, {0.0, 0.0}, false, 0.0);
  EXPECT_EQ(policy_objective(sac, single_batch(t), cfg, Matrix(1, 1, 0.2)).loss.consolidation, 0.0);
}

TEST(PolicyObjective, ConsolidationWithoutOriginalIsConfigError) {
  LearnerConfig cfg = tiny_config();
  cfg.upc = true;
  SacState sac = tiny_sac(15, cfg);
  const Transition t = make_transition({0.1, 0.9}, 0.0, 0.0, {0.0, 0.0});
  Rng rng = make_rng(1);
  EXPECT_THROW(policy_update(sac, single_batch(t), cfg, rng), ConfigError);
}

TEST(PolicyUpdate, ChangesOnlyThePolicy) {
  LearnerConfig cfg = tiny_config();
  SacState sac = tiny_sac(16, cfg);
  const SacState before = sac;
  const Transition t = make_transition({0.1, 0.9}, 0.0, 0.0, {0.0, 0.0});
  Rng rng = make_rng(2);
  policy_update(sac, single_batch(t), cfg, rng);
  EXPECT_NE(sac.policy, before.policy);
  EXPECT_EQ(sac.critic1, before.critic1);
  EXPECT_EQ(sac.critic2, before.critic2);
}

TEST(SacState, OriginalPolicyFrozenOnce) {
  LearnerConfig cfg = tiny_config();
  SacState sac = tiny_sac(17, cfg);
  sac.freeze_original(sac.policy);
  EXPECT_THROW(sac.freeze_original(sac.policy), StateError);
}

TEST(TargetUpdate, PolyakCases) {
  LearnerConfig cfg = tiny_config();
  SacState sac = tiny_sac(18, cfg);
  for (auto block : parameter_blocks(sac.critic1.layers)) std::fill(block.begin(), block.end(), 2.0);
  for (auto block : parameter_blocks(sac.target1.layers)) std::fill(block.begin(), block.end(), 0.0);
  target_update(sac, 0.5);
  for (auto block : parameter_blocks(sac.target1.layers)) {
    for (double v : block) EXPECT_EQ(v, 1.0);
  }
  target_update(sac, 1.0);
  EXPECT_EQ(sac.target1, sac.critic1);
  EXPECT_EQ(sac.target2, sac.critic2);
  EXPECT_THROW(target_update(sac, 0.0), ConfigError);
  EXPECT_THROW(target_update(sac, 1.5), ConfigError);
}

TEST(CollectStep, TrainingUsesEnvironmentReward) {
  const LearnerConfig cfg = tiny_config();
  Rng init = make_rng(19);
  PointRoom env;
  SacState sac = SacState::create(2, 2, cfg, init);
  RngStreams rng = RngStreams::from_seed(1);
  Rollout ro = begin_episode(sac, env, Phase::training, cfg, rng);
  EXPECT_TRUE(sac.tracker.initialized);
  for (int i = 0; i < 50; ++i) {
    const StepRecord rec = collect_step(sac, env, ro, Phase::training, cfg, rng);
    const Transition& t = rec.transition;
    EXPECT_TRUE(t.in_dist_state);
    EXPECT_TRUE(t.in_dist_next);
    EXPECT_EQ(t.effective_reward, t.env_reward);
    EXPECT_EQ(t.d_u_state, 0.0);
    EXPECT_EQ(t.d_u_next, 0.0);
    EXPECT_FALSE(t.done);
    for (std::size_t k = 0; k < sac.tracker.dim; ++k) EXPECT_GE(sac.tracker.sigma_max[k], rec.sigma_u_next[k]);
  }
}

TEST(CollectStep, RetrainingAuxRewardRecomputesFromLoggedUncertainty) {
  LearnerConfig cfg = tiny_config();
  cfg.reward_mode = RewardMode::aux_manual;
  cfg.lambda = 0.7;
  Rng init = make_rng(20);
  PointRoom env;
  SacState sac = SacState::create(2, 2, cfg, init);
  sac.freeze_original(sac.policy);
  RngStreams rng = RngStreams::from_seed(2);
  Rollout ro = begin_episode(sac, env, Phase::retraining, cfg, rng);
  int ood = 0;
  for (int i = 0; i < 100; ++i) {
    const UncertaintyTracker before = sac.tracker;
    const StepRecord rec = collect_step(sac, env, ro, Phase::retraining, cfg, rng);
    const Transition& t = rec.transition;
    EXPECT_EQ(t.d_u_state, uncertainty_distance(before, rec.sigma_u_state));
    UncertaintyTracker after = before;
    update_sigma_max(after, rec.sigma_u_next);
    EXPECT_EQ(after, sac.tracker);
    const double du_next = uncertainty_distance(after, rec.sigma_u_next);
    EXPECT_EQ(t.d_u_next, du_next);
    if (!t.in_dist_state) {
      ++ood;
      EXPECT_EQ(t.effective_reward, -cfg.lambda * du_next);
    } else {
      EXPECT_EQ(t.effective_reward, t.env_reward);
    }
    EXPECT_GE(t.d_u_state, 0.0);
    EXPECT_LE(t.d_u_state, 1.0);
  }
  EXPECT_GT(ood, 0);
}

TEST(CollectStep, RetrainingUncertaintyReproducibleUnderSeed) {
  LearnerConfig cfg = tiny_config();
  cfg.reward_mode = RewardMode::aux_manual;
  auto run = [&] {
    Rng init = make_rng(21);
    PointRoom env;
    SacState sac = SacState::create(2, 2, cfg, init);
    sac.freeze_original(sac.policy);
    RngStreams rng = RngStreams::from_seed(3);
    Rollout ro = begin_episode(sac, env, Phase::retraining, cfg, rng);
    std::vector<double> out;
    for (int i = 0; i < 20; ++i) {
      const StepRecord rec = collect_step(sac, env, ro, Phase::retraining, cfg, rng);
      out.push_back(rec.transition.d_u_state);
      out.push_back(rec.transition.effective_reward);
    }
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(CollectStep, RetrainingUsesFrozenEncoder) {
  LearnerConfig cfg = tiny_config();
  Rng init = make_rng(22);
  SacState sac = SacState::create(2, 2, cfg, init);
  EXPECT_EQ(&uncertainty_encoder(sac, Phase::retraining), &sac.policy.encoder);
  sac.freeze_original(sac.policy);
  EXPECT_EQ(&uncertainty_encoder(sac, Phase::retraining), &sac.original_policy->encoder);
  EXPECT_EQ(&uncertainty_encoder(sac, Phase::training), &sac.policy.encoder);
}

TEST(CollectStep, TerminationSetsDoneButTruncationDoesNot) {
  const LearnerConfig cfg = tiny_config();
  Rng init = make_rng(23);
  SacState sac = SacState::create(3, 1, cfg, init);
  RngStreams rng = RngStreams::from_seed(4);
  Pendulum env;
  Rollout ro = begin_episode(sac, env, Phase::training, cfg, rng);
  env.set_state(Phase::training, 0.79, 4.0);
  ro.obs = env.observation();
  const StepRecord rec = collect_step(sac, env, ro, Phase::training, cfg, rng);
  EXPECT_TRUE(rec.terminated);
  EXPECT_TRUE(rec.transition.done);
  EXPECT_TRUE(ro.finished);
  EXPECT_THROW(collect_step(sac, env, ro, Phase::training, cfg, rng), StateError);

  PointRoom room;
  sac = SacState::create(2, 2, cfg, init);
  ro = begin_episode(sac, room, Phase::training, cfg, rng);
  StepRecord last;
  while (!ro.finished) last = collect_step(sac, room, ro, Phase::training, cfg, rng);
  EXPECT_TRUE(last.truncated);
  EXPECT_FALSE(last.transition.done);
}

}  // namespace
}  // namespace sero
