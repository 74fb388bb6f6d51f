#include "sero/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sero/errors.hpp"

namespace sero {

std::string to_string(Phase phase) { return phase == Phase::training ? "training" : "retraining"; }

Phase parse_phase(const std::string& name) {
  if (name == "training") return Phase::training;
  if (name == "retraining") return Phase::retraining;
  throw ConfigError("unknown phase '" + name + "'");
}

namespace {

double clamp_action(double a) { return std::isfinite(a) ? std::clamp(a, -1.0, 1.0) : 0.0; }

}  // namespace

// PointRoom

bool PointRoom::in_distribution(double x, double y) { return x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0; }

double PointRoom::reward(double x, double y) { return -std::hypot(x - kGoalX, y - kGoalY); }

Vector PointRoom::reset(Phase phase, Rng& rng) {
  phase_ = phase;
  steps_ = 0;
  done_ = false;
  if (phase == Phase::training) {
    x_ = uniform(rng, 0.05, 0.95);
    y_ = uniform(rng, 0.05, 0.95);
  } else {
    x_ = 1.8 + uniform(rng, -0.05, 0.05);
    y_ = 0.5 + uniform(rng, -0.05, 0.05);
  }
  return observation();
}

void PointRoom::set_state(Phase phase, double x, double y) {
  phase_ = phase;
  x_ = x;
  y_ = y;
  steps_ = 0;
  done_ = false;
}

StepResult PointRoom::step(std::span<const double> action) {
  if (done_) throw StateError("point_room: step after episode end");
  if (action.size() != 2) throw ShapeError("point_room expects a 2-d action");
  const double nx = x_ + kStepSize * clamp_action(action[0]);
  const double ny = std::clamp(y_ + kStepSize * clamp_action(action[1]), 0.0, 1.0);
  if (phase_ == Phase::training) {
    x_ = std::clamp(nx, 0.0, 1.0);
  } else {
    // The wall at x = 1 only lets the point through the door opening, checked
    // at the height where the segment crosses the wall.
    const bool crosses = (x_ <= 1.0) != (nx <= 1.0);
    if (crosses) {
      const double t = (1.0 - x_) / (nx - x_);
      const double y_cross = y_ + t * (ny - y_);
      if (y_cross >= kDoorLow && y_cross <= kDoorHigh) {
        x_ = nx;
      } else {
        // Blocked: stay on the side the point came from.
        x_ = x_ <= 1.0 ? 1.0 : std::nextafter(1.0, kAnnexRight);
      }
    } else {
      x_ = std::clamp(nx, 0.0, kAnnexRight);
    }
  }
  y_ = ny;
  ++steps_;
  StepResult r;
  r.observation = observation();
  r.env_reward = reward(x_, y_);
  r.terminated = false;
  r.truncated = steps_ >= kHorizon;
  r.in_distribution = in_distribution();
  done_ = r.truncated;
  return r;
}

// Pendulum

bool Pendulum::in_distribution(double theta) { return std::abs(theta) <= kUprightBound; }

double Pendulum::wrap(double theta) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(theta + std::numbers::pi, two_pi);
  if (w < 0.0) w += two_pi;
  w -= std::numbers::pi;
  return w == -std::numbers::pi ? std::numbers::pi : w;
}

Vector Pendulum::observation() const { return {std::cos(theta_), std::sin(theta_), theta_dot_}; }

Vector Pendulum::reset(Phase phase, Rng& rng) {
  phase_ = phase;
  steps_ = 0;
  done_ = false;
  if (phase == Phase::training) {
    theta_ = uniform(rng, -0.3, 0.3);
    theta_dot_ = uniform(rng, -0.5, 0.5);
  } else {
    theta_ = wrap(std::numbers::pi + uniform(rng, -0.1, 0.1));
    theta_dot_ = 0.0;
  }
  return observation();
}

void Pendulum::set_state(Phase phase, double theta, double theta_dot) {
  phase_ = phase;
  theta_ = wrap(theta);
  theta_dot_ = std::clamp(theta_dot, -kMaxSpeed, kMaxSpeed);
  steps_ = 0;
  done_ = false;
}

StepResult Pendulum::step(std::span<const double> action) {
  if (done_) throw StateError("pendulum: step after episode end");
  if (action.size() != 1) throw ShapeError("pendulum expects a 1-d action");
  const double torque = kMaxTorque * clamp_action(action[0]);
  const double accel = 3.0 * kGravity / (2.0 * kLength) * std::sin(theta_) +
                       3.0 * torque / (kMass * kLength * kLength);
  theta_dot_ = std::clamp(theta_dot_ + kDt * accel, -kMaxSpeed, kMaxSpeed);
  theta_ = wrap(theta_ + kDt * theta_dot_);
  ++steps_;
  StepResult r;
  r.observation = observation();
  r.env_reward = std::cos(theta_) - 0.01 * theta_dot_ * theta_dot_ - 0.001 * torque * torque;
  r.in_distribution = in_distribution();
  r.terminated = phase_ == Phase::training && !r.in_distribution;
  r.truncated = !r.terminated && steps_ >= horizon(phase_);
  done_ = r.terminated || r.truncated;
  return r;
}

std::unique_ptr<Environment> make_environment(const std::string& id) {
  if (id == "point_room") return std::make_unique<PointRoom>();
  if (id == "pendulum") return std::make_unique<Pendulum>();
  throw ConfigError("unknown environment '" + id + "'");
}

}  // namespace sero
