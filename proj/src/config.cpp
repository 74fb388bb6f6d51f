#include "sero/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "sero/errors.hpp"

namespace sero {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::sero: return "sero";
    case Variant::sero_oc: return "sero_oc";
    case Variant::sac_env: return "sac_env";
    case Variant::sac_zero: return "sac_zero";
  }
  return "sero";
}

Variant parse_variant(const std::string& name) {
  if (name == "sero") return Variant::sero;
  if (name == "sero_oc") return Variant::sero_oc;
  if (name == "sac_env") return Variant::sac_env;
  if (name == "sac_zero") return Variant::sac_zero;
  throw ConfigError("unknown variant '" + name + "'");
}

RewardMode reward_mode_for(Variant v) {
  switch (v) {
    case Variant::sero: return RewardMode::aux_manual;
    case Variant::sero_oc: return RewardMode::aux_own_criterion;
    case Variant::sac_env: return RewardMode::env_only;
    case Variant::sac_zero: return RewardMode::zero_ood;
  }
  return RewardMode::env_only;
}

bool consolidation_for(Variant v) { return v == Variant::sero || v == Variant::sero_oc; }

std::int64_t default_steps(const std::string& env, Phase phase) {
  if (env == "pendulum") return phase == Phase::training ? 150'000 : 100'000;
  return phase == Phase::training ? 60'000 : 50'000;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

template <class Int>
Int to_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::string fmt_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <class T, class F>
std::string join(const std::vector<T>& items, F f) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += f(items[i]);
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SERO_DOUBLE(name, member)                                                        \
  Field {                                                                                \
    name, [](RunConfig& c, const std::string& v) { c.member = to_double(name, v); },     \
        [](const RunConfig& c) { return fmt_double(c.member); }                          \
  }
#define SERO_SIZE(name, member)                                                                  \
  Field {                                                                                        \
    name, [](RunConfig& c, const std::string& v) { c.member = to_int<std::size_t>(name, v); },   \
        [](const RunConfig& c) { return std::to_string(c.member); }                              \
  }
#define SERO_BOOL(name, member)                                                              \
  Field {                                                                                    \
    name, [](RunConfig& c, const std::string& v) { c.member = to_bool(name, v); },           \
        [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }          \
  }

std::function<void(RunConfig&, const std::string&)> auto_int(const char* name, std::int64_t RunConfig::*member) {
  return [name, member](RunConfig& c, const std::string& v) {
    c.*member = v == "auto" ? -1 : to_int<std::int64_t>(name, v);
    if (c.*member < -1) throw ConfigError(std::string(name) + " must be non-negative or auto");
  };
}

std::function<std::string(const RunConfig&)> show_auto_int(std::int64_t RunConfig::*member) {
  return [member](const RunConfig& c) { return c.*member < 0 ? std::string("auto") : std::to_string(c.*member); };
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"env", [](RunConfig& c, const std::string& v) { c.env = v; }, [](const RunConfig& c) { return c.env; }},
      {"phase", [](RunConfig& c, const std::string& v) { c.phase = parse_phase(v); },
       [](const RunConfig& c) { return to_string(c.phase); }},
      {"variant",
       [](RunConfig& c, const std::string& v) {
         c.variants.clear();
         for (const auto& s : split(v, ',')) c.variants.push_back(parse_variant(s));
         if (c.variants.empty()) throw ConfigError("variant list is empty");
       },
       [](const RunConfig& c) { return join(c.variants, [](Variant x) { return to_string(x); }); }},
      {"seeds",
       [](RunConfig& c, const std::string& v) {
         c.seeds.clear();
         for (const auto& s : split(v, ',')) c.seeds.push_back(to_int<std::uint64_t>("seeds", s));
         if (c.seeds.empty()) throw ConfigError("seed list is empty");
       },
       [](const RunConfig& c) { return join(c.seeds, [](std::uint64_t s) { return std::to_string(s); }); }},
      SERO_DOUBLE("gamma", learner.gamma),
      SERO_DOUBLE("tau", learner.tau),
      SERO_DOUBLE("alpha", learner.alpha),
      SERO_DOUBLE("lambda", learner.lambda),
      {"epsilon",
       [](RunConfig& c, const std::string& v) {
         c.epsilon_auto = v == "auto";
         if (!c.epsilon_auto) c.learner.epsilon = to_double("epsilon", v);
       },
       [](const RunConfig& c) { return c.epsilon_auto ? std::string("auto") : fmt_double(c.learner.epsilon); }},
      SERO_DOUBLE("lr", learner.lr),
      SERO_SIZE("batch_size", learner.batch_size),
      SERO_SIZE("mc_passes", learner.mc_passes),
      {"upc",
       [](RunConfig& c, const std::string& v) {
         if (v == "auto") {
           c.upc = Toggle::automatic;
         } else {
           c.upc = to_bool("upc", v) ? Toggle::on : Toggle::off;
         }
       },
       [](const RunConfig& c) {
         return std::string(c.upc == Toggle::automatic ? "auto" : c.upc == Toggle::on ? "on" : "off");
       }},
      SERO_SIZE("buffer_capacity", learner.buffer_capacity),
      {"hidden",
       [](RunConfig& c, const std::string& v) {
         c.learner.hidden.clear();
         for (const auto& s : split(v, ',')) c.learner.hidden.push_back(to_int<std::size_t>("hidden", s));
       },
       [](const RunConfig& c) { return join(c.learner.hidden, [](std::size_t h) { return std::to_string(h); }); }},
      SERO_SIZE("feature_dim", learner.feature_dim),
      SERO_DOUBLE("dropout", learner.dropout),
      {"steps", auto_int("steps", &RunConfig::steps), show_auto_int(&RunConfig::steps)},
      SERO_SIZE("eval_interval", eval_interval),
      SERO_SIZE("eval_episodes", eval_episodes),
      SERO_SIZE("episodes", episodes),
      {"random_steps", auto_int("random_steps", &RunConfig::random_steps), show_auto_int(&RunConfig::random_steps)},
      SERO_SIZE("update_after", update_after),
      SERO_SIZE("calibration_episodes", calibration_episodes),
      SERO_DOUBLE("quantile", quantile),
      SERO_DOUBLE("margin", margin),
      SERO_BOOL("recalibrate_sigma_max", recalibrate_sigma_max),
      SERO_BOOL("wall_clock", wall_clock),
      {"out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; },
       [](const RunConfig& c) { return c.out_dir; }},
      {"checkpoint", [](RunConfig& c, const std::string& v) { c.checkpoint = v; },
       [](const RunConfig& c) { return c.checkpoint; }},
  };
  return table;
}

#undef SERO_DOUBLE
#undef SERO_SIZE
#undef SERO_BOOL

const Field& find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) { find_field(key).set(*this, trim(value)); }

std::string RunConfig::get(const std::string& key) const { return find_field(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return k;
}

std::int64_t RunConfig::resolved_steps(Phase p) const { return steps >= 0 ? steps : default_steps(env, p); }

std::int64_t RunConfig::resolved_random_steps(Phase p) const {
  if (random_steps >= 0) return random_steps;
  return p == Phase::training ? 2000 : 0;
}

void RunConfig::validate() const {
  make_environment(env);
  learner.validate();
  if (eval_interval == 0) throw ConfigError("eval_interval must be positive");
  if (eval_episodes == 0 || episodes == 0 || calibration_episodes == 0) {
    throw ConfigError("episode counts must be positive");
  }
  if (!(quantile > 0.0 && quantile < 1.0)) throw ConfigError("quantile must lie in (0, 1)");
  if (!(margin >= 0.0)) throw ConfigError("margin must be non-negative");
  if (seeds.empty()) throw ConfigError("seed list is empty");
  if (variants.empty()) throw ConfigError("variant list is empty");
}

RunConfig RunConfig::resolved() const {
  RunConfig r = *this;
  r.steps = resolved_steps(phase);
  r.random_steps = resolved_random_steps(phase);
  r.validate();
  return r;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += f.key + "=" + f.get(*this) + "\n";
  return out;
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

}  // namespace sero
