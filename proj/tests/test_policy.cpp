#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "sero/errors.hpp"
#include "sero/policy.hpp"
#include "support.hpp"

namespace sero {
namespace {

GaussianPolicy small_policy(Rng& rng, std::size_t obs = 3, std::size_t act_dim = 2) {
  return GaussianPolicy::create(obs, act_dim, {8, 8}, 6, 0.1, rng);
}

void zero_heads(GaussianPolicy& p) {
  for (auto* head : {&p.mu_head, &p.logstd_head}) {
    for (auto block : parameter_blocks(head->layers)) std::fill(block.begin(), block.end(), 0.0);
  }
}

// Squashed density in action space: N(atanh(a); mu, sigma) / (1 - a^2).
double squashed_density(double a, double mu, double sigma) {
  const double u = std::atanh(a);
  const double z = (u - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi)) / (1.0 - a * a);
}

TEST(Distribution, ZeroHeadsGiveStandardNormal) {
  Rng rng = make_rng(1);
  GaussianPolicy p = small_policy(rng);
  zero_heads(p);
  const ActionDistribution d = distribution(p, Vector{0.3, -0.2, 0.9});
  EXPECT_EQ(d.mu, (Vector{0.0, 0.0}));
  EXPECT_EQ(d.sigma, (Vector{1.0, 1.0}));
}

TEST(Distribution, LogStdClampedAtUpperBound) {
  Rng rng = make_rng(1);
  GaussianPolicy p = small_policy(rng);
  zero_heads(p);
  p.logstd_head.layers[0].bias = {10.0, -30.0};
  const ActionDistribution d = distribution(p, Vector{0.1, 0.2, 0.3});
  EXPECT_EQ(d.sigma[0], std::exp(2.0));
  EXPECT_EQ(d.sigma[1], std::exp(-20.0));
}

TEST(Distribution, RepeatedCallsAgree) {
  Rng rng = make_rng(2);
  const GaussianPolicy p = small_policy(rng);
  const Vector s{0.5, 0.1, -0.7};
  const ActionDistribution a = distribution(p, s);
  const ActionDistribution b = distribution(p, s);
  EXPECT_EQ(a.mu, b.mu);
  EXPECT_EQ(a.sigma, b.sigma);
}

TEST(Distribution, NonFiniteActivationIsNumericError) {
  Rng rng = make_rng(2);
  GaussianPolicy p = small_policy(rng);
  p.encoder.layers[0].bias[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(distribution(p, Vector{0.0, 0.0, 0.0}), NumericError);
}

TEST(Act, DeterministicZeroMeanGivesZero) {
  Rng rng = make_rng(3);
  GaussianPolicy p = small_policy(rng);
  zero_heads(p);
  EXPECT_EQ(act(p, Vector{1.0, 2.0, 3.0}, ActMode::deterministic, rng), (Vector{0.0, 0.0}));
}

TEST(Act, DeterministicSaturatesNearOne) {
  Rng rng = make_rng(3);
  GaussianPolicy p = small_policy(rng);
  zero_heads(p);
  p.mu_head.layers[0].bias = {1e3, -1e3};
  const Vector a = act(p, Vector{0.0, 0.0, 0.0}, ActMode::deterministic, rng);
  EXPECT_NEAR(a[0], 1.0, 1e-12);
  EXPECT_NEAR(a[1], -1.0, 1e-12);
  EXPECT_LT(a[0], 1.0);
  EXPECT_GT(a[1], -1.0);
}

TEST(Act, StochasticStaysInsideOpenInterval) {
  Rng rng = make_rng(4);
  GaussianPolicy p = small_policy(rng);
  p.logstd_head.layers[0].bias = {2.0, 2.0};
  p.mu_head.layers[0].bias = {15.0, -15.0};
  for (int i = 0; i < 2000; ++i) {
    for (double a : act(p, Vector{0.2, 0.2, 0.2}, ActMode::stochastic, rng)) {
      EXPECT_GT(a, -1.0);
      EXPECT_LT(a, 1.0);
    }
  }
}

TEST(Act, DeterministicIgnoresSeed) {
  Rng init = make_rng(5);
  const GaussianPolicy p = small_policy(init);
  const Vector s{0.4, -0.3, 0.8};
  Rng a = make_rng(1);
  Rng b = make_rng(999);
  EXPECT_EQ(act(p, s, ActMode::deterministic, a), act(p, s, ActMode::deterministic, b));
}

TEST(LogProb, StandardNormalAtZero) {
  const ActionDistribution d{{0.0}, {1.0}};
  EXPECT_NEAR(log_prob(d, Vector{0.0}), -0.918939, 1e-6);
  EXPECT_NEAR(log_prob(d, Vector{0.0}), -0.5 * std::log(2.0 * std::numbers::pi), 2e-6);
}

TEST(LogProb, StandardNormalAtOne) {
  const ActionDistribution d{{0.0}, {1.0}};
  const double t = std::tanh(1.0);
  const double expected = -0.5 - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(1.0 - t * t);
  EXPECT_NEAR(expected, -0.551377, 1e-6);
  EXPECT_NEAR(log_prob(d, Vector{1.0}), -0.551377, 1e-5);
}

TEST(LogProb, SumsOverDimensions) {
  const ActionDistribution d{{0.3, -0.1}, {0.5, 1.2}};
  const ActionDistribution d0{{0.3}, {0.5}};
  const ActionDistribution d1{{-0.1}, {1.2}};
  EXPECT_DOUBLE_EQ(log_prob(d, Vector{0.2, 0.4}), log_prob(d0, Vector{0.2}) + log_prob(d1, Vector{0.4}));
}

TEST(LogProb, SquashedDensityIntegratesToOne) {
  // Midpoint rule over a in (-1, 1) with 1e5 points.
  Rng rng = make_rng(6);
  constexpr int kPoints = 100000;
  const double h = 2.0 / kPoints;
  for (int trial = 0; trial < 100; ++trial) {
    const double mu = uniform(rng, -1.0, 1.0);
    const double sigma = uniform(rng, 0.1, 1.0);
    const ActionDistribution d{{mu}, {sigma}};
    double total = 0.0;
    for (int i = 0; i < kPoints; ++i) {
      const double a = -1.0 + (i + 0.5) * h;
      total += std::exp(log_prob(d, Vector{std::atanh(a)})) * h;
    }
    EXPECT_NEAR(total, 1.0, 1e-3) << "mu=" << mu << " sigma=" << sigma;
  }
}

TEST(LogProb, MatchesChangeOfVariablesDensity) {
  const ActionDistribution d{{0.4}, {0.7}};
  for (double a : {-0.9, -0.2, 0.0, 0.5, 0.95}) {
    EXPECT_NEAR(std::exp(log_prob(d, Vector{std::atanh(a)})), squashed_density(a, 0.4, 0.7),
                2e-6 * squashed_density(a, 0.4, 0.7) / (1.0 - a * a));
  }
}

TEST(LogProbGrad, MatchesCentralDifferences) {
  Rng rng = make_rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const ActionDistribution d{{uniform(rng, -1, 1), uniform(rng, -1, 1)}, {uniform(rng, 0.2, 2), uniform(rng, 0.2, 2)}};
    const Vector u{uniform(rng, -2, 2), uniform(rng, -2, 2)};
    const LogProbGrad g = log_prob_grad(d, u);
    for (std::size_t k = 0; k < 2; ++k) {
      const double h = 1e-6;
      ActionDistribution p = d;
      ActionDistribution m = d;
      p.mu[k] += h;
      m.mu[k] -= h;
      EXPECT_NEAR(g.d_mu[k], (log_prob(p, u) - log_prob(m, u)) / (2 * h), 1e-6);
      p = d;
      m = d;
      p.sigma[k] *= std::exp(h);
      m.sigma[k] *= std::exp(-h);
      EXPECT_NEAR(g.d_log_sigma[k], (log_prob(p, u) - log_prob(m, u)) / (2 * h), 1e-6);
    }
  }
}

TEST(LogProbGrad, PolicyParameterGradientsMatchCentralDifferences) {
  Rng rng = make_rng(8);
  GaussianPolicy p = GaussianPolicy::create(3, 2, {10, 10}, 6, 0.1, rng);
  const Matrix states = testing::random_matrix(4, 3, rng);
  const Matrix u = testing::random_matrix(4, 2, rng, -1.5, 1.5);

  auto total_log_prob = [&](const GaussianPolicy& pol) {
    double s = 0.0;
    for (std::size_t b = 0; b < states.rows; ++b) s += log_prob(distribution(pol, states.row(b)), u.row(b));
    return s;
  };

  const PolicyPass pass = policy_forward(p, states);
  Matrix d_mu(4, 2);
  Matrix d_ls(4, 2);
  for (std::size_t b = 0; b < 4; ++b) {
    const ActionDistribution d{{pass.mu(b, 0), pass.mu(b, 1)}, {pass.sigma(b, 0), pass.sigma(b, 1)}};
    const LogProbGrad g = log_prob_grad(d, u.row(b));
    for (std::size_t k = 0; k < 2; ++k) {
      d_mu(b, k) = g.d_mu[k];
      d_ls(b, k) = g.d_log_sigma[k];
    }
  }
  const PolicyGradients grads = policy_backward(p, pass, d_mu, d_ls);

  const std::pair<MlpParams GaussianPolicy::*, const GradientSet*> nets[] = {
      {&GaussianPolicy::encoder, &grads.encoder},
      {&GaussianPolicy::mu_head, &grads.mu_head},
      {&GaussianPolicy::logstd_head, &grads.logstd_head}};
  for (const auto& [member, analytic] : nets) {
    const auto numeric = testing::central_differences((p.*member).layers, [&](const std::vector<DenseLayer>& layers) {
      GaussianPolicy q = p;
      (q.*member).layers = layers;
      return total_log_prob(q);
    });
    const auto cmp = testing::compare_gradients(analytic->layers, numeric);
    EXPECT_GT(cmp.compared, 0u);
    EXPECT_LT(cmp.worst_relative, 1e-4);
  }
}

TEST(PolicyBackward, NoGradientThroughClampedLogStd) {
  Rng rng = make_rng(9);
  GaussianPolicy p = small_policy(rng);
  zero_heads(p);
  p.logstd_head.layers[0].bias = {5.0, -25.0};
  const Matrix states = testing::random_matrix(3, 3, rng);
  const PolicyPass pass = policy_forward(p, states);
  const Matrix d_mu(3, 2);
  const Matrix d_ls(3, 2, 1.0);
  const PolicyGradients g = policy_backward(p, pass, d_mu, d_ls);
  for (auto block : parameter_blocks(g.logstd_head.layers)) {
    for (double v : block) EXPECT_EQ(v, 0.0);
  }
}

TEST(Kl, SelfDivergenceIsZero) {
  const ActionDistribution p{{0.3, -1.2}, {0.4, 2.5}};
  EXPECT_EQ(kl_divergence(p, p), 0.0);
}

TEST(Kl, UnitMeanShift) {
  EXPECT_NEAR(kl_divergence({{0.0}, {1.0}}, {{1.0}, {1.0}}), 0.5, 1e-12);
}

TEST(Kl, ScaleChange) {
  EXPECT_NEAR(kl_divergence({{0.0}, {1.0}}, {{0.0}, {2.0}}), std::log(2.0) + 0.125 - 0.5, 1e-12);
  EXPECT_NEAR(kl_divergence({{0.0}, {1.0}}, {{0.0}, {2.0}}), 0.318147, 1e-6);
}

TEST(Kl, NonNegativeOnRandomPairs) {
  Rng rng = make_rng(10);
  for (int i = 0; i < 10000; ++i) {
    ActionDistribution p{{uniform(rng, -3, 3)}, {std::exp(uniform(rng, -3, 1))}};
    ActionDistribution q{{uniform(rng, -3, 3)}, {std::exp(uniform(rng, -3, 1))}};
    EXPECT_GE(kl_divergence(p, q), 0.0);
    EXPECT_LE(kl_divergence(p, p), 1e-12);
  }
}

TEST(Policy, HeadsMustMatchActionDim) {
  Rng rng = make_rng(11);
  GaussianPolicy p = small_policy(rng);
  p.action_dim = 3;
  EXPECT_THROW(p.validate(), ShapeError);
}

}  // namespace
}  // namespace sero
