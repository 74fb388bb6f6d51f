#pragma once

// Desk-scale continuous-control tasks. Each has a training variant whose
// legal region or termination rule bounds the visited states, and a
// retraining variant that spawns the agent outside that region.

#include <memory>
#include <span>
#include <string>

#include "sero/matrix.hpp"
#include "sero/rng.hpp"

namespace sero {

enum class Phase { training, retraining };

std::string to_string(Phase phase);
Phase parse_phase(const std::string& name);

struct StepResult {
  Vector observation;
  double env_reward = 0.0;
  bool terminated = false;
  bool truncated = false;
  bool in_distribution = true;
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string id() const = 0;
  virtual std::size_t obs_dim() const = 0;
  virtual std::size_t action_dim() const = 0;
  virtual std::size_t horizon(Phase phase) const = 0;

  virtual Vector reset(Phase phase, Rng& rng) = 0;
  /// Actions outside [-1, 1] are clamped. Throws StateError after the episode ended.
  virtual StepResult step(std::span<const double> action) = 0;
  /// Manual membership test for the training-phase state set, on the current state.
  virtual bool in_distribution() const = 0;
  virtual Vector observation() const = 0;

  virtual std::unique_ptr<Environment> clone() const = 0;
};

/// Point mass in the unit room; the retraining variant adds an annex
/// [1, 2] x [0, 1] reachable through a door at x = 1, y in [0.4, 0.6].
class PointRoom final : public Environment {
 public:
  static constexpr double kStepSize = 0.05;
  static constexpr double kGoalX = 0.2;
  static constexpr double kGoalY = 0.8;
  static constexpr double kDoorLow = 0.4;
  static constexpr double kDoorHigh = 0.6;
  static constexpr double kAnnexRight = 2.0;
  static constexpr std::size_t kHorizon = 200;

  std::string id() const override { return "point_room"; }
  std::size_t obs_dim() const override { return 2; }
  std::size_t action_dim() const override { return 2; }
  std::size_t horizon(Phase) const override { return kHorizon; }

  Vector reset(Phase phase, Rng& rng) override;
  StepResult step(std::span<const double> action) override;
  bool in_distribution() const override { return in_distribution(x_, y_); }
  Vector observation() const override { return {x_, y_}; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<PointRoom>(*this); }

  static bool in_distribution(double x, double y);
  static double reward(double x, double y);

  void set_state(Phase phase, double x, double y);
  double x() const { return x_; }
  double y() const { return y_; }

 private:
  Phase phase_ = Phase::training;
  double x_ = 0.5;
  double y_ = 0.5;
  std::size_t steps_ = 0;
  bool done_ = false;
};

/// Torque-limited pendulum, angle measured from upright. Training episodes
/// terminate once |theta| > 0.8; retraining starts hanging and never terminates.
class Pendulum final : public Environment {
 public:
  static constexpr double kDt = 0.05;
  static constexpr double kGravity = 10.0;
  static constexpr double kMass = 1.0;
  static constexpr double kLength = 1.0;
  static constexpr double kMaxTorque = 2.0;
  static constexpr double kMaxSpeed = 8.0;
  static constexpr double kUprightBound = 0.8;

  std::string id() const override { return "pendulum"; }
  std::size_t obs_dim() const override { return 3; }
  std::size_t action_dim() const override { return 1; }
  std::size_t horizon(Phase phase) const override { return phase == Phase::training ? 200 : 500; }

  Vector reset(Phase phase, Rng& rng) override;
  StepResult step(std::span<const double> action) override;
  bool in_distribution() const override { return in_distribution(theta_); }
  Vector observation() const override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<Pendulum>(*this); }

  static bool in_distribution(double theta);
  /// Wraps an angle into (-pi, pi].
  static double wrap(double theta);

  void set_state(Phase phase, double theta, double theta_dot);
  double theta() const { return theta_; }
  double theta_dot() const { return theta_dot_; }

 private:
  Phase phase_ = Phase::training;
  double theta_ = 0.0;
  double theta_dot_ = 0.0;
  std::size_t steps_ = 0;
  bool done_ = false;
};

/// "point_room" or "pendulum"; throws ConfigError otherwise.
std::unique_ptr<Environment> make_environment(const std::string& id);

}  // namespace sero
