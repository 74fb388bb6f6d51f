#include "sero/cli.hpp"

#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "sero/config.hpp"
#include "sero/errors.hpp"
#include "sero/harness.hpp"
#include "sero/plot.hpp"

namespace sero {

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config_file;
  std::map<std::string, std::string> overrides;
};

void add_config_options(CLI::App& sub, CommonArgs& args) {
  sub.add_option("--config", args.config_file, "flat key=value config file");
  for (const auto& key : RunConfig::keys()) {
    sub.add_option_function<std::string>(
        "--" + key, [&args, key](const std::string& v) { args.overrides[key] = v; }, "config key " + key);
  }
  sub.add_option_function<std::string>(
      "--seed", [&args](const std::string& v) { args.overrides["seeds"] = v; }, "alias for --seeds");
}

RunConfig build_config(const CommonArgs& args, Phase phase) {
  RunConfig cfg;
  cfg.phase = phase;
  if (!args.config_file.empty()) cfg = load_config_file(args.config_file, cfg);
  for (const auto& [k, v] : args.overrides) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  f << text;
}

std::string substitute_seed(std::string path, std::uint64_t seed) {
  const std::string token = "{seed}";
  for (auto pos = path.find(token); pos != std::string::npos; pos = path.find(token)) {
    path.replace(pos, token.size(), std::to_string(seed));
  }
  return path;
}

/// Runs independent jobs, one worker each; the first failure is rethrown.
void run_jobs(const std::vector<std::function<void()>>& jobs) {
  std::vector<std::exception_ptr> errors(jobs.size());
  const auto n = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      jobs[static_cast<std::size_t>(i)]();
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

RunConfig single_seed(RunConfig cfg, std::uint64_t seed) {
  cfg.seeds = {seed};
  return cfg;
}

int cmd_train(const CommonArgs& args, std::ostream& out) {
  const RunConfig cfg = build_config(args, Phase::training).resolved();
  write_text(fs::path(cfg.out_dir) / "config.txt", cfg.to_text());
  std::vector<std::function<void()>> jobs;
  for (auto seed : cfg.seeds) {
    jobs.emplace_back([cfg, seed] {
      const fs::path dir = fs::path(cfg.out_dir) / ("seed_" + std::to_string(seed));
      write_text(dir / "config.txt", single_seed(cfg, seed).to_text());
      run_training_phase(cfg, seed, {dir.string()});
    });
  }
  run_jobs(jobs);
  out << "trained " << cfg.seeds.size() << " seed(s) into " << cfg.out_dir << "\n";
  return kExitOk;
}

int cmd_retrain(const CommonArgs& args, std::ostream& out) {
  const RunConfig cfg = build_config(args, Phase::retraining).resolved();
  if (cfg.checkpoint.empty()) throw ConfigError("retrain requires --checkpoint");
  write_text(fs::path(cfg.out_dir) / "config.txt", cfg.to_text());
  std::vector<std::function<void()>> jobs;
  for (auto variant : cfg.variants) {
    for (auto seed : cfg.seeds) {
      jobs.emplace_back([cfg, variant, seed] {
        const Checkpoint ck = load_checkpoint(substitute_seed(cfg.checkpoint, seed));
        const fs::path dir = fs::path(cfg.out_dir) / to_string(variant) / ("seed_" + std::to_string(seed));
        RunConfig run = single_seed(cfg, seed);
        run.variants = {variant};
        write_text(dir / "config.txt", run.to_text());
        run_retraining_phase(cfg, ck, variant, seed, {dir.string()});
      });
    }
  }
  run_jobs(jobs);
  out << "retrained " << cfg.variants.size() << " variant(s) x " << cfg.seeds.size() << " seed(s) into "
      << cfg.out_dir << "\n";
  return kExitOk;
}

int cmd_eval(const CommonArgs& args, std::ostream& out) {
  const RunConfig cfg = build_config(args, Phase::training);
  if (cfg.checkpoint.empty()) throw ConfigError("eval requires --checkpoint");
  out << std::left << std::setw(8) << "seed" << std::setw(12) << "phase" << std::setw(10) << "episodes"
      << std::setw(22) << "raw_return" << std::setw(22) << "zeroed_return" << std::setw(10) << "mean_du"
      << "in_dist_frac\n";
  for (auto seed : cfg.seeds) {
    const Checkpoint ck = load_checkpoint(substitute_seed(cfg.checkpoint, seed));
    auto env = make_environment(ck.env_id);
    Rng rng = make_rng(seed, 99);
    const EvalResult r = evaluate(ck, *env, cfg.phase, cfg.episodes, rng);
    std::ostringstream raw, zeroed;
    raw << std::fixed << std::setprecision(3) << r.raw_mean << " +- " << r.raw_std;
    zeroed << std::fixed << std::setprecision(3) << r.zeroed_mean << " +- " << r.zeroed_std;
    out << std::left << std::setw(8) << seed << std::setw(12) << to_string(cfg.phase) << std::setw(10) << cfg.episodes
        << std::setw(22) << raw.str() << std::setw(22) << zeroed.str() << std::setw(10) << std::fixed
        << std::setprecision(4) << r.mean_du << r.in_dist_frac << "\n";
  }
  return kExitOk;
}

int cmd_calibrate(const CommonArgs& args, std::ostream& out) {
  RunConfig cfg = build_config(args, Phase::retraining);
  if (cfg.checkpoint.empty()) throw ConfigError("calibrate requires --checkpoint");
  const std::uint64_t seed = cfg.seeds.front();
  const Checkpoint ck = load_checkpoint(substitute_seed(cfg.checkpoint, seed));
  auto env = make_environment(ck.env_id);
  Rng rng = make_rng(seed, 7);
  const double eps = calibrate_epsilon(ck, *env, cfg.calibration_episodes, cfg.quantile, cfg.margin, rng);
  cfg.env = ck.env_id;
  cfg.set("epsilon", [&] {
    std::ostringstream s;
    s << std::setprecision(17) << eps;
    return s.str();
  }());
  write_text(fs::path(cfg.out_dir) / "config.txt", cfg.resolved().to_text());
  out << "epsilon=" << cfg.get("epsilon") << "\n";
  return kExitOk;
}

struct PlotArgs {
  std::vector<std::string> files;
  std::vector<std::string> series;
  std::string output = "curves.svg";
  std::string metric = "zeroed_return";
  std::string title;
  std::optional<double> reference;
  std::string reference_csv;
  std::string timestamp;
};

int cmd_plot(const PlotArgs& args, std::ostream& out) {
  std::vector<CurveSeries> curves;
  auto load_runs = [](const std::vector<std::string>& files) {
    std::vector<std::vector<MetricsRow>> runs;
    for (const auto& f : files) runs.push_back(read_metrics_csv(f));
    return runs;
  };
  if (!args.files.empty()) curves.push_back(aggregate_curves(args.metric, load_runs(args.files), args.metric));
  for (const auto& series_arg : args.series) {
    const auto eq = series_arg.find('=');
    if (eq == std::string::npos) throw ConfigError("--series expects label=file1,file2,...");
    std::vector<std::string> files;
    std::stringstream ss(series_arg.substr(eq + 1));
    for (std::string f; std::getline(ss, f, ',');) {
      if (!f.empty()) files.push_back(f);
    }
    curves.push_back(aggregate_curves(series_arg.substr(0, eq), load_runs(files), args.metric));
  }
  if (curves.empty()) throw ConfigError("plot needs at least one metrics CSV");
  PlotOptions opt;
  opt.title = args.title;
  opt.y_label = args.metric;
  opt.reference = args.reference;
  if (!args.reference_csv.empty()) {
    // Training-phase reference: mean of the final evaluation row across the given runs.
    std::vector<std::vector<MetricsRow>> runs;
    std::stringstream ss(args.reference_csv);
    for (std::string f; std::getline(ss, f, ',');) {
      if (!f.empty()) runs.push_back(read_metrics_csv(f));
    }
    double sum = 0.0;
    for (const auto& r : runs) {
      if (r.empty()) throw ConfigError("reference CSV has no rows");
      sum += r.back().raw_return;
    }
    opt.reference = sum / static_cast<double>(runs.size());
  }
  if (!args.timestamp.empty()) opt.timestamp = args.timestamp;
  write_text(fs::absolute(args.output), render_svg(curves, opt));
  out << "wrote " << args.output << "\n";
  return kExitOk;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Out-of-distribution recovery laboratory: train, retrain, evaluate, calibrate, plot", "sero"};
  app.require_subcommand(1);

  CommonArgs train_args, retrain_args, eval_args, calibrate_args;
  auto* train = app.add_subcommand("train", "training phase: checkpoint + metrics CSV per seed");
  add_config_options(*train, train_args);
  auto* retrain = app.add_subcommand("retrain", "retraining phase from --checkpoint: metrics CSV per variant and seed");
  add_config_options(*retrain, retrain_args);
  auto* eval = app.add_subcommand("eval", "evaluate --checkpoint in --phase and print a summary table");
  add_config_options(*eval, eval_args);
  auto* calibrate = app.add_subcommand("calibrate", "own-criterion threshold from --checkpoint");
  add_config_options(*calibrate, calibrate_args);

  PlotArgs plot_args;
  auto* plot = app.add_subcommand("plot", "SVG learning curves (mean +- std across seeds)");
  plot->add_option("files", plot_args.files, "metrics CSVs forming one series");
  plot->add_option("--series", plot_args.series, "label=a.csv,b.csv (repeatable)");
  plot->add_option("--output,-o", plot_args.output, "SVG path");
  plot->add_option("--metric", plot_args.metric, "CSV column to plot");
  plot->add_option("--title", plot_args.title);
  plot->add_option("--reference", plot_args.reference, "dashed horizontal line value");
  plot->add_option("--reference-csv", plot_args.reference_csv, "training-phase CSVs; dashed line at their final mean");
  plot->add_option("--timestamp", plot_args.timestamp, "generator timestamp comment (omitted by default)");

  std::vector<const char*> argv{"sero"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (*train) return cmd_train(train_args, out);
    if (*retrain) return cmd_retrain(retrain_args, out);
    if (*eval) return cmd_eval(eval_args, out);
    if (*calibrate) return cmd_calibrate(calibrate_args, out);
    if (*plot) return cmd_plot(plot_args, out);
  } catch (const NumericError& e) {
    err << "numeric divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const StateError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ShapeError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitConfig;
}

}  // namespace sero
