#pragma once

// Run configuration: a flat key=value document. Every key has a default,
// unknown keys are rejected, and the resolved configuration can be written
// back out and re-read to reproduce a run.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sero/envs.hpp"
#include "sero/learner.hpp"

namespace sero {

enum class Variant { sero, sero_oc, sac_env, sac_zero };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);
RewardMode reward_mode_for(Variant v);
bool consolidation_for(Variant v);

enum class Toggle { automatic, on, off };

struct RunConfig {
  std::string env = "point_room";
  Phase phase = Phase::training;
  std::vector<Variant> variants{Variant::sero};
  std::vector<std::uint64_t> seeds{1};
  LearnerConfig learner;
  bool epsilon_auto = true;  // calibrate epsilon from the checkpoint when needed
  Toggle upc = Toggle::automatic;
  std::int64_t steps = -1;   // -1: desk-scale default for env and phase
  std::size_t eval_interval = 2000;
  std::size_t eval_episodes = 5;
  std::size_t episodes = 20;  // eval / calibrate
  std::int64_t random_steps = -1;  // -1: 2000 while training, 0 while retraining
  std::size_t update_after = 1000;
  std::size_t calibration_episodes = 20;
  double quantile = 0.95;
  double margin = 0.05;
  bool recalibrate_sigma_max = false;
  bool wall_clock = false;
  std::string out_dir = "runs";
  std::string checkpoint;

  /// Sets one key from its text form. Throws ConfigError on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  /// Fills "auto" budgets and validates ranges.
  RunConfig resolved() const;
  std::int64_t resolved_steps(Phase p) const;
  std::int64_t resolved_random_steps(Phase p) const;
  void validate() const;

  /// key=value lines in declaration order.
  std::string to_text() const;
};

/// Parses a key=value document (blank lines and '#' comments allowed) onto `base`.
RunConfig parse_config_text(const std::string& text, RunConfig base = {});
RunConfig load_config_file(const std::string& path, RunConfig base = {});

/// Desk-scale step budgets.
std::int64_t default_steps(const std::string& env, Phase phase);

}  // namespace sero
