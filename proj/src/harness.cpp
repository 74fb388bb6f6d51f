#include "sero/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <span>
#include <sstream>

#include <json.hpp>

#include "sero/errors.hpp"

namespace sero {

using nlohmann::json;

namespace {

// Checkpoint encoding

std::string activation_name(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + s + "'");
}

void require_finite(std::span<const double> v, const std::string& name) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError("non-finite value in tensor " + name);
  }
}

void put_network(json& doc, const std::string& name, const MlpParams& net) {
  json meta;
  meta["activations"] = json::array();
  for (auto a : net.activations) meta["activations"].push_back(activation_name(a));
  meta["dropout"] = net.dropout;
  meta["layers"] = net.layers.size();
  doc["networks"][name] = meta;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& l = net.layers[k];
    const std::string prefix = name + "." + std::to_string(k);
    require_finite(l.weight.data, prefix + ".weight");
    require_finite(l.bias, prefix + ".bias");
    doc["tensors"].push_back({{"name", prefix + ".weight"}, {"shape", {l.weight.rows, l.weight.cols}}, {"data", l.weight.data}});
    doc["tensors"].push_back({{"name", prefix + ".bias"}, {"shape", {l.bias.size()}}, {"data", l.bias}});
  }
}

const json& find_tensor(const json& doc, const std::string& name) {
  for (const auto& t : doc.at("tensors")) {
    if (t.at("name").get<std::string>() == name) return t;
  }
  throw ConfigError("checkpoint is missing tensor '" + name + "'");
}

MlpParams get_network(const json& doc, const std::string& name) {
  const json& meta = doc.at("networks").at(name);
  MlpParams net;
  for (const auto& a : meta.at("activations")) net.activations.push_back(parse_activation(a.get<std::string>()));
  net.dropout = meta.at("dropout").get<std::vector<double>>();
  const auto layers = meta.at("layers").get<std::size_t>();
  for (std::size_t k = 0; k < layers; ++k) {
    const std::string prefix = name + "." + std::to_string(k);
    const json& w = find_tensor(doc, prefix + ".weight");
    const json& b = find_tensor(doc, prefix + ".bias");
    const auto shape = w.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2) throw ConfigError(prefix + ".weight must be rank 2");
    DenseLayer layer{Matrix(shape[0], shape[1]), b.at("data").get<std::vector<double>>()};
    const auto values = w.at("data").get<std::vector<double>>();
    layer.weight.data.assign(values.begin(), values.end());
    if (layer.weight.data.size() != shape[0] * shape[1]) throw ConfigError(prefix + ".weight data/shape mismatch");
    net.layers.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

json learner_to_json(const LearnerConfig& c) {
  return {{"gamma", c.gamma},          {"tau", c.tau},
          {"alpha", c.alpha},          {"lambda", c.lambda},
          {"epsilon", c.epsilon},      {"lr", c.lr},
          {"batch_size", c.batch_size}, {"mc_passes", c.mc_passes},
          {"upc", c.upc},              {"reward_mode", to_string(c.reward_mode)},
          {"buffer_capacity", c.buffer_capacity}, {"hidden", c.hidden},
          {"feature_dim", c.feature_dim}, {"dropout", c.dropout}};
}

LearnerConfig learner_from_json(const json& j) {
  LearnerConfig c;
  c.gamma = j.at("gamma").get<double>();
  c.tau = j.at("tau").get<double>();
  c.alpha = j.at("alpha").get<double>();
  c.lambda = j.at("lambda").get<double>();
  c.epsilon = j.at("epsilon").get<double>();
  c.lr = j.at("lr").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.mc_passes = j.at("mc_passes").get<std::size_t>();
  c.upc = j.at("upc").get<bool>();
  c.reward_mode = parse_reward_mode(j.at("reward_mode").get<std::string>());
  c.buffer_capacity = j.at("buffer_capacity").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  return c;
}

std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

std::string checkpoint_to_text(const Checkpoint& ck) {
  json doc;
  doc["version"] = ck.version;
  doc["config"] = learner_to_json(ck.config);
  doc["env"] = ck.env_id;
  doc["phase"] = to_string(ck.phase);
  doc["step"] = ck.step;
  doc["seed"] = ck.seed;
  doc["rng"] = {{"env", ck.rng_env}, {"action", ck.rng_action}, {"uncertainty", ck.rng_uncertainty}, {"update", ck.rng_update}};
  require_finite(ck.tracker.sigma_max, "tracker.sigma_max");
  doc["tracker"] = {{"initialized", ck.tracker.initialized}, {"dim", ck.tracker.dim}, {"sigma_max", ck.tracker.sigma_max}};
  doc["policy_action_dim"] = ck.policy.action_dim;
  doc["tensors"] = json::array();
  put_network(doc, "policy.encoder", ck.policy.encoder);
  put_network(doc, "policy.mu_head", ck.policy.mu_head);
  put_network(doc, "policy.logstd_head", ck.policy.logstd_head);
  put_network(doc, "critic1", ck.critic1);
  put_network(doc, "critic2", ck.critic2);
  put_network(doc, "target1", ck.target1);
  put_network(doc, "target2", ck.target2);
  doc["flags"] = ck.flags;
  return doc.dump(1) + "\n";
}

Checkpoint checkpoint_from_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
  try {
    Checkpoint ck;
    ck.version = doc.at("version").get<int>();
    if (ck.version != kCheckpointVersion) {
      throw ConfigError("checkpoint version " + std::to_string(ck.version) + " is not supported (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    }
    ck.config = learner_from_json(doc.at("config"));
    ck.env_id = doc.at("env").get<std::string>();
    ck.phase = parse_phase(doc.at("phase").get<std::string>());
    ck.step = doc.at("step").get<std::int64_t>();
    ck.seed = doc.at("seed").get<std::uint64_t>();
    const json& rng = doc.at("rng");
    ck.rng_env = rng.at("env").get<std::string>();
    ck.rng_action = rng.at("action").get<std::string>();
    ck.rng_uncertainty = rng.at("uncertainty").get<std::string>();
    ck.rng_update = rng.at("update").get<std::string>();
    const json& tr = doc.at("tracker");
    ck.tracker.initialized = tr.at("initialized").get<bool>();
    ck.tracker.dim = tr.at("dim").get<std::size_t>();
    ck.tracker.sigma_max = tr.at("sigma_max").get<std::vector<double>>();
    ck.policy.encoder = get_network(doc, "policy.encoder");
    ck.policy.mu_head = get_network(doc, "policy.mu_head");
    ck.policy.logstd_head = get_network(doc, "policy.logstd_head");
    ck.policy.action_dim = doc.at("policy_action_dim").get<std::size_t>();
    ck.policy.validate();
    ck.critic1 = get_network(doc, "critic1");
    ck.critic2 = get_network(doc, "critic2");
    ck.target1 = get_network(doc, "target1");
    ck.target2 = get_network(doc, "target2");
    ck.flags = doc.at("flags").get<std::vector<std::string>>();
    if (ck.tracker.initialized && ck.tracker.sigma_max.size() != ck.tracker.dim) {
      throw ConfigError("tracker dimension mismatch");
    }
    return ck;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  const std::string text = checkpoint_to_text(ck);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read checkpoint '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_text(ss.str());
}

// Metrics

std::string format_metrics_row(const MetricsRow& r) {
  return std::to_string(r.step) + "," + fmt(r.raw_return) + "," + fmt(r.zeroed_return) + "," + fmt(r.mean_du) + "," +
         fmt(r.in_dist_frac) + "," + fmt(r.kl_to_org) + "," + fmt(r.seconds);
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read metrics '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw ConfigError(path + ": unexpected metrics header");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw ConfigError(path + ": malformed metrics row");
    MetricsRow r;
    try {
      r.step = std::stoll(cells[0]);
      r.raw_return = std::stod(cells[1]);
      r.zeroed_return = std::stod(cells[2]);
      r.mean_du = std::stod(cells[3]);
      r.in_dist_frac = std::stod(cells[4]);
      r.kl_to_org = std::stod(cells[5]);
      r.seconds = std::stod(cells[6]);
    } catch (const std::exception&) {
      throw ConfigError(path + ": malformed metrics row");
    }
    rows.push_back(r);
  }
  return rows;
}

MetricsWriter::MetricsWriter(const std::string& path) : out_(path, std::ios::trunc) {
  if (!out_) throw ConfigError("cannot write metrics '" + path + "'");
  out_ << kMetricsHeader << '\n';
  out_.flush();
}

void MetricsWriter::append(const MetricsRow& row) {
  out_ << format_metrics_row(row) << '\n';
  out_.flush();
}

// Evaluation

EvalResult evaluate(const EvalSetup& setup, Environment& env, Phase phase, std::size_t episodes, Rng& rng) {
  if (episodes == 0) throw ConfigError("evaluate needs at least one episode");
  if (setup.policy == nullptr || setup.du_encoder == nullptr || setup.tracker == nullptr) {
    throw ConfigError("evaluate: incomplete setup");
  }
  EvalResult res;
  double du_sum = 0.0;
  double kl_sum = 0.0;
  std::size_t kl_count = 0;
  std::size_t steps = 0;
  std::size_t in_dist_steps = 0;
  Rng unused(0);
  for (std::size_t ep = 0; ep < episodes; ++ep) {
    Vector obs = env.reset(phase, rng);
    bool in_dist = env.in_distribution();
    double raw = 0.0;
    double zeroed = 0.0;
    std::size_t run = 0;
    for (;;) {
      if (setup.original != nullptr && in_dist) {
        kl_sum += kl_divergence(distribution(*setup.policy, obs), distribution(*setup.original, obs));
        ++kl_count;
      }
      const Vector action = act(*setup.policy, obs, ActMode::deterministic, unused);
      const StepResult r = env.step(action);
      raw += r.env_reward;
      ++steps;
      if (r.in_distribution) {
        zeroed += r.env_reward;
        ++in_dist_steps;
        res.longest_in_dist_run = std::max(res.longest_in_dist_run, ++run);
      } else {
        run = 0;
      }
      double du = 0.0;
      if (setup.tracker->initialized) {
        du = uncertainty_distance(*setup.tracker, mc_uncertainty(*setup.du_encoder, r.observation, setup.mc_passes, rng));
      }
      du_sum += du;
      if (r.in_distribution) res.in_dist_du.push_back(du);
      obs = r.observation;
      in_dist = r.in_distribution;
      if (r.terminated || r.truncated) break;
    }
    res.raw_returns.push_back(raw);
    res.zeroed_returns.push_back(zeroed);
  }
  res.raw_mean = mean_of(res.raw_returns);
  res.raw_std = std_of(res.raw_returns);
  res.zeroed_mean = mean_of(res.zeroed_returns);
  res.zeroed_std = std_of(res.zeroed_returns);
  res.mean_du = steps ? du_sum / static_cast<double>(steps) : 0.0;
  res.in_dist_frac = steps ? static_cast<double>(in_dist_steps) / static_cast<double>(steps) : 0.0;
  res.kl_to_org = kl_count ? kl_sum / static_cast<double>(kl_count) : 0.0;
  return res;
}

EvalResult evaluate(const Checkpoint& ck, Environment& env, Phase phase, std::size_t episodes, Rng& rng) {
  EvalSetup setup{&ck.policy, &ck.policy.encoder, &ck.tracker, nullptr, ck.config.mc_passes};
  return evaluate(setup, env, phase, episodes, rng);
}

double epsilon_from_samples(std::vector<double> values, double quantile, double margin) {
  if (values.empty()) throw StateError("no in-distribution uncertainty samples to calibrate from");
  if (!(quantile > 0.0 && quantile < 1.0)) throw ConfigError("quantile must lie in (0, 1)");
  std::sort(values.begin(), values.end());
  const double h = static_cast<double>(values.size() - 1) * quantile;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double q = values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
  return std::clamp(q + margin, 1e-6, 1.0 - 1e-6);
}

double calibrate_epsilon(const Checkpoint& ck, Environment& env, std::size_t episodes, double quantile,
                         double margin, Rng& rng) {
  if (!ck.tracker.initialized) throw StateError("checkpoint has no uncertainty maxima; train it first");
  const EvalResult r = evaluate(ck, env, Phase::training, episodes, rng);
  return epsilon_from_samples(r.in_dist_du, quantile, margin);
}

UncertaintyTracker recalibrate_tracker(const Checkpoint& ck, Environment& env, std::size_t episodes,
                                       std::size_t mc_passes, Rng& rng) {
  UncertaintyTracker tracker(ck.policy.feature_dim());
  Rng unused(0);
  for (std::size_t ep = 0; ep < episodes; ++ep) {
    Vector obs = env.reset(Phase::training, rng);
    for (;;) {
      if (env.in_distribution()) update_sigma_max(tracker, mc_uncertainty(ck.policy.encoder, obs, mc_passes, rng));
      const StepResult r = env.step(act(ck.policy, obs, ActMode::deterministic, unused));
      obs = r.observation;
      if (r.terminated || r.truncated) break;
    }
  }
  if (!tracker.initialized) throw StateError("recalibration visited no in-distribution state");
  return tracker;
}

// Phase loops

namespace {

Checkpoint make_checkpoint(const SacState& sac, const LearnerConfig& lcfg, const Environment& env, Phase phase,
                           std::int64_t step, std::uint64_t seed, const RngStreams& rng) {
  Checkpoint ck;
  ck.config = lcfg;
  ck.env_id = env.id();
  ck.phase = phase;
  ck.step = step;
  ck.seed = seed;
  ck.rng_env = serialize_rng(rng.env);
  ck.rng_action = serialize_rng(rng.action);
  ck.rng_uncertainty = serialize_rng(rng.uncertainty);
  ck.rng_update = serialize_rng(rng.update);
  ck.policy = sac.policy;
  ck.critic1 = sac.critic1;
  ck.critic2 = sac.critic2;
  ck.target1 = sac.target1;
  ck.target2 = sac.target2;
  ck.tracker = sac.tracker;
  if (!sac.tracker.initialized) ck.flags.emplace_back("tracker_uninitialized");
  return ck;
}

struct LoopSpec {
  Phase phase;
  std::int64_t steps;
  std::int64_t random_steps;
  std::uint64_t seed;
  std::uint64_t salt;
};

PhaseOutcome run_loop(SacState& sac, Environment& env, const LearnerConfig& lcfg, const RunConfig& cfg,
                      const LoopSpec& loop, const PhaseOptions& options) {
  namespace fs = std::filesystem;
  PhaseOutcome out;
  std::optional<MetricsWriter> writer;
  if (!options.out_dir.empty()) {
    fs::create_directories(options.out_dir);
    writer.emplace((fs::path(options.out_dir) / "metrics.csv").string());
  }
  RngStreams rng = RngStreams::from_seed(loop.seed, loop.salt);
  ReplayBuffer buffer(lcfg.buffer_capacity);
  Rollout rollout;
  std::size_t run = 0;
  const auto start = std::chrono::steady_clock::now();
  Checkpoint last_good = make_checkpoint(sac, lcfg, env, loop.phase, 0, loop.seed, rng);
  std::int64_t t = 0;
  try {
    for (; t < loop.steps; ++t) {
      if (static_cast<std::size_t>(t) % cfg.eval_interval == 0) {
        Rng eval_rng = make_rng(loop.seed, 1'000'000 + static_cast<std::uint64_t>(t) + 10'000'000 * loop.salt);
        auto eval_env = env.clone();
        EvalSetup setup{&sac.policy, &uncertainty_encoder(sac, loop.phase), &sac.tracker,
                        sac.original_policy.get(), lcfg.mc_passes};
        const EvalResult e = evaluate(setup, *eval_env, loop.phase, cfg.eval_episodes, eval_rng);
        MetricsRow row{t, e.raw_mean, e.zeroed_mean, e.mean_du, e.in_dist_frac, e.kl_to_org, 0.0};
        if (cfg.wall_clock) {
          row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        }
        out.rows.push_back(row);
        if (writer) writer->append(row);
        last_good = make_checkpoint(sac, lcfg, env, loop.phase, t, loop.seed, rng);
      }
      if (rollout.finished) {
        rollout = begin_episode(sac, env, loop.phase, lcfg, rng);
        run = 0;
      }
      const StepRecord rec = collect_step(sac, env, rollout, loop.phase, lcfg, rng, t < loop.random_steps);
      if (rec.transition.in_dist_next) {
        if (out.first_in_dist_step < 0) out.first_in_dist_step = t;
        ++run;
        if (run == options.long_run && out.first_long_run_step < 0) out.first_long_run_step = t;
        out.longest_in_dist_run = std::max(out.longest_in_dist_run, run);
      } else {
        run = 0;
      }
      buffer.push(rec.transition);
      if (buffer.size() >= lcfg.batch_size && static_cast<std::size_t>(t + 1) >= cfg.update_after) {
        const Batch batch = Batch::from(buffer.sample(lcfg.batch_size, rng.update));
        const CriticLosses cl = critic_update(sac, batch, lcfg, rng.update);
        const PolicyLoss pl = policy_update(sac, batch, lcfg, rng.update);
        target_update(sac, lcfg.tau);
        if (options.record_losses) {
          out.critic_losses.push_back(cl);
          out.policy_losses.push_back(pl);
        }
      }
    }
  } catch (const NumericError&) {
    if (!options.out_dir.empty()) {
      last_good.flags.emplace_back("diverged");
      save_checkpoint(last_good, (fs::path(options.out_dir) / "checkpoint.json").string());
    }
    throw;
  }
  out.checkpoint = make_checkpoint(sac, lcfg, env, loop.phase, t, loop.seed, rng);
  if (!options.out_dir.empty()) save_checkpoint(out.checkpoint, (fs::path(options.out_dir) / "checkpoint.json").string());
  return out;
}

}  // namespace

PhaseOutcome run_training_phase(const RunConfig& cfg, std::uint64_t seed, const PhaseOptions& options) {
  cfg.validate();
  auto env = make_environment(cfg.env);
  LearnerConfig lcfg = cfg.learner;
  lcfg.reward_mode = RewardMode::env_only;
  lcfg.upc = false;
  Rng init = make_rng(seed, 0);
  SacState sac = SacState::create(env->obs_dim(), env->action_dim(), lcfg, init);
  const LoopSpec loop{Phase::training, cfg.resolved_steps(Phase::training), cfg.resolved_random_steps(Phase::training),
                      seed, 0};
  return run_loop(sac, *env, lcfg, cfg, loop, options);
}

LearnerConfig retraining_learner_config(const RunConfig& cfg, const Checkpoint& ck, Variant variant) {
  LearnerConfig lcfg = cfg.learner;
  lcfg.hidden = ck.config.hidden;
  lcfg.feature_dim = ck.config.feature_dim;
  lcfg.dropout = ck.config.dropout;
  lcfg.reward_mode = reward_mode_for(variant);
  const bool wants = consolidation_for(variant);
  if (cfg.upc == Toggle::on && !wants) {
    throw ConfigError("consolidation requires an uncertainty-aware variant, not " + to_string(variant));
  }
  lcfg.upc = cfg.upc == Toggle::automatic ? wants : cfg.upc == Toggle::on;
  lcfg.validate();
  return lcfg;
}

PhaseOutcome run_retraining_phase(const RunConfig& cfg, const Checkpoint& ck, Variant variant, std::uint64_t seed,
                                  const PhaseOptions& options) {
  cfg.validate();
  if (ck.env_id != cfg.env) throw ConfigError("checkpoint env '" + ck.env_id + "' does not match config env '" + cfg.env + "'");
  if (!ck.tracker.initialized) throw StateError("checkpoint has no uncertainty maxima; train it first");
  auto env = make_environment(cfg.env);
  LearnerConfig lcfg = retraining_learner_config(cfg, ck, variant);
  if (lcfg.reward_mode == RewardMode::aux_own_criterion && cfg.epsilon_auto) {
    Rng cal = make_rng(seed, 7);
    auto cal_env = env->clone();
    lcfg.epsilon = calibrate_epsilon(ck, *cal_env, cfg.calibration_episodes, cfg.quantile, cfg.margin, cal);
  }
  SacState sac;
  sac.policy = ck.policy;
  sac.critic1 = ck.critic1;
  sac.critic2 = ck.critic2;
  sac.target1 = ck.target1;
  sac.target2 = ck.target2;
  sac.tracker = ck.tracker;
  if (cfg.recalibrate_sigma_max) {
    Rng cal = make_rng(seed, 8);
    auto cal_env = env->clone();
    sac.tracker = recalibrate_tracker(ck, *cal_env, cfg.calibration_episodes, lcfg.mc_passes, cal);
  }
  sac.reset_optimizers();
  sac.freeze_original(ck.policy);
  const LoopSpec loop{Phase::retraining, cfg.resolved_steps(Phase::retraining),
                      cfg.resolved_random_steps(Phase::retraining), seed, 1};
  PhaseOutcome out = run_loop(sac, *env, lcfg, cfg, loop, options);
  out.epsilon = lcfg.epsilon;
  return out;
}

}  // namespace sero
