#pragma once

// Two-phase protocol: train on the original task, freeze the result as the
// original policy, then retrain from out-of-distribution spawns under one of
// the reward/consolidation variants. Also evaluation, epsilon calibration,
// checkpoints and metrics CSVs.

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "sero/config.hpp"
#include "sero/learner.hpp"

namespace sero {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  int version = kCheckpointVersion;
  LearnerConfig config;
  std::string env_id;
  Phase phase = Phase::training;
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  std::string rng_env;
  std::string rng_action;
  std::string rng_uncertainty;
  std::string rng_update;
  GaussianPolicy policy;
  MlpParams critic1;
  MlpParams critic2;
  MlpParams target1;
  MlpParams target2;
  UncertaintyTracker tracker;
  std::vector<std::string> flags;  // e.g. "tracker_uninitialized", "diverged"

  bool operator==(const Checkpoint&) const = default;
};

std::string checkpoint_to_text(const Checkpoint& ck);
/// Throws ConfigError on a malformed document or a version mismatch.
Checkpoint checkpoint_from_text(const std::string& text);
void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

struct MetricsRow {
  std::int64_t step = 0;
  double raw_return = 0.0;
  double zeroed_return = 0.0;
  double mean_du = 0.0;
  double in_dist_frac = 0.0;
  double kl_to_org = 0.0;
  double seconds = 0.0;
};

inline constexpr const char* kMetricsHeader = "step,raw_return,zeroed_return,mean_du,in_dist_frac,kl_to_org,seconds";

std::string format_metrics_row(const MetricsRow& row);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

/// Append-only CSV: the header is written on open, every row is flushed.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);
  void append(const MetricsRow& row);

 private:
  std::ofstream out_;
};

struct EvalResult {
  double raw_mean = 0.0;
  double raw_std = 0.0;
  double zeroed_mean = 0.0;
  double zeroed_std = 0.0;
  double mean_du = 0.0;
  double in_dist_frac = 0.0;
  double kl_to_org = 0.0;  // mean over in-distribution states; 0 without an original policy
  std::vector<double> raw_returns;
  std::vector<double> zeroed_returns;
  std::vector<double> in_dist_du;  // d_u of every in-distribution state visited
  std::size_t longest_in_dist_run = 0;
};

struct EvalSetup {
  const GaussianPolicy* policy = nullptr;
  const MlpParams* du_encoder = nullptr;          // encoder for uncertainty distances
  const UncertaintyTracker* tracker = nullptr;    // read-only normalization
  const GaussianPolicy* original = nullptr;       // KL anchor, optional
  std::size_t mc_passes = 10;
};

/// Deterministic-policy rollouts. Zeroed returns count reward only on steps
/// whose resulting state is in distribution.
EvalResult evaluate(const EvalSetup& setup, Environment& env, Phase phase, std::size_t episodes, Rng& rng);
EvalResult evaluate(const Checkpoint& ck, Environment& env, Phase phase, std::size_t episodes, Rng& rng);

/// Interpolated (type 7) quantile of `values` plus `margin`, clamped inside (0, 1).
double epsilon_from_samples(std::vector<double> values, double quantile, double margin);

/// Threshold for the own-criterion reward from d_u on in-distribution
/// training-phase rollouts of the checkpoint policy.
double calibrate_epsilon(const Checkpoint& ck, Environment& env, std::size_t episodes, double quantile,
                         double margin, Rng& rng);

/// Rebuilds sigma_max from the checkpoint encoder on in-distribution rollouts.
UncertaintyTracker recalibrate_tracker(const Checkpoint& ck, Environment& env, std::size_t episodes,
                                       std::size_t mc_passes, Rng& rng);

struct PhaseOutcome {
  std::vector<MetricsRow> rows;
  Checkpoint checkpoint;               // final state of the phase
  std::int64_t first_in_dist_step = -1;  // first collected step whose next state is in distribution
  std::size_t longest_in_dist_run = 0;   // longest run of consecutive in-distribution collected states
  std::int64_t first_long_run_step = -1; // step at which a run of `long_run` consecutive steps completed
  double epsilon = 0.0;                  // threshold in effect (own criterion only)
  std::vector<CriticLosses> critic_losses;  // filled when record_losses is set
  std::vector<PolicyLoss> policy_losses;
};

struct PhaseOptions {
  std::string out_dir;           // empty: nothing written
  bool record_losses = false;
  std::size_t long_run = 50;
};

/// Trains from scratch; writes checkpoint.json and metrics.csv into out_dir.
PhaseOutcome run_training_phase(const RunConfig& cfg, std::uint64_t seed, const PhaseOptions& options = {});

/// Retrains a trained checkpoint under `variant`; the checkpoint policy is
/// frozen as the original policy.
PhaseOutcome run_retraining_phase(const RunConfig& cfg, const Checkpoint& ck, Variant variant, std::uint64_t seed,
                                  const PhaseOptions& options = {});

/// Learner configuration used for a retraining variant (reward mode and consolidation).
LearnerConfig retraining_learner_config(const RunConfig& cfg, const Checkpoint& ck, Variant variant);

}  // namespace sero
