#include "mi_skills/config.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

namespace mi_skills {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE) throw ConfigError("expected a number, got '" + v + "'");
  return d;
}

template <typename Int>
Int to_int(const std::string& v) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("expected an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

struct Key {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Key num_key(const char* name, T RunConfig::*field) {
  return {name,
          [field](RunConfig& c, const std::string& v) {
            if constexpr (std::is_floating_point_v<T>) {
              c.*field = to_double(v);
            } else {
              c.*field = to_int<T>(v);
            }
          },
          [field](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return fmt_double(c.*field);
            } else {
              return std::to_string(c.*field);
            }
          }};
}

template <typename T, typename Sub>
Key nested_key(const char* name, Sub RunConfig::*outer, T Sub::*field) {
  return {name,
          [outer, field](RunConfig& c, const std::string& v) {
            if constexpr (std::is_floating_point_v<T>) {
              (c.*outer).*field = to_double(v);
            } else {
              (c.*outer).*field = to_int<T>(v);
            }
          },
          [outer, field](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return fmt_double((c.*outer).*field);
            } else {
              return std::to_string((c.*outer).*field);
            }
          }};
}

Key bool_key(const char* name, bool RunConfig::*field) {
  return {name, [field](RunConfig& c, const std::string& v) { c.*field = to_bool(v); },
          [field](const RunConfig& c) { return std::string(c.*field ? "true" : "false"); }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"env", [](RunConfig& c, const std::string& v) { c.env.kind = v; }, [](const RunConfig& c) { return c.env.kind; }},
      nested_key("env.horizon", &RunConfig::env, &envs::EnvConfig::horizon),
      nested_key("env.step_size", &RunConfig::env, &envs::EnvConfig::step_size),
      nested_key("env.arena_half_width", &RunConfig::env, &envs::EnvConfig::arena_half_width),
      nested_key("env.reset_half_width", &RunConfig::env, &envs::EnvConfig::reset_half_width),
      nested_key("env.terminate_radius", &RunConfig::env, &envs::EnvConfig::terminate_radius),
      num_key("skill_dim", &RunConfig::skill_dim),
      num_key("hidden", &RunConfig::hidden),
      num_key("dynamics_hidden", &RunConfig::dynamics_hidden),
      nested_key("gamma", &RunConfig::learner, &sac::LearnerConfig::gamma),
      nested_key("entropy_coef", &RunConfig::learner, &sac::LearnerConfig::entropy_coef),
      nested_key("tau", &RunConfig::learner, &sac::LearnerConfig::tau),
      nested_key("policy_batch", &RunConfig::learner, &sac::LearnerConfig::batch_size),
      nested_key("policy_steps", &RunConfig::learner, &sac::LearnerConfig::steps_per_round),
      nested_key("lr_actor", &RunConfig::learner, &sac::LearnerConfig::lr_actor),
      nested_key("lr_critic", &RunConfig::learner, &sac::LearnerConfig::lr_critic),
      num_key("lr_dynamics", &RunConfig::lr_dynamics),
      num_key("dynamics_steps", &RunConfig::dynamics_steps),
      num_key("dynamics_batch", &RunConfig::dynamics_batch),
      num_key("prior_samples", &RunConfig::prior_samples),
      num_key("is_clip", &RunConfig::is_clip),
      num_key("replay_capacity", &RunConfig::replay_capacity),
      num_key("newsteps", &RunConfig::newsteps),
      num_key("min_new_episodes", &RunConfig::min_new_episodes),
      bool_key("onpolicy_dynamics", &RunConfig::onpolicy_dynamics),
      num_key("seed", &RunConfig::seed),
      num_key("sample_budget", &RunConfig::sample_budget),
      num_key("collectors", &RunConfig::collectors),
      {"mode", [](RunConfig& c, const std::string& v) {
         if (v != "sync" && v != "async") throw ConfigError("mode must be sync or async, got '" + v + "'");
         c.sync = v == "sync";
       },
       [](const RunConfig& c) { return std::string(c.sync ? "sync" : "async"); }},
      bool_key("lockstep", &RunConfig::lockstep),
      num_key("queue_capacity", &RunConfig::queue_capacity),
      num_key("checkpoint_every", &RunConfig::checkpoint_every),
      {"output_dir", [](RunConfig& c, const std::string& v) { c.output_dir = v; },
       [](const RunConfig& c) { return c.output_dir; }},
  };
  return table;
}

const Key* find_key(const std::string& name) {
  for (const auto& k : keys()) {
    if (name == k.name) return &k;
  }
  return nullptr;
}

}  // namespace

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError(key + ": " + what);
  };
  require(env.kind == "point_mass" || env.kind == "valve", "env", "must be point_mass or valve");
  require(env.horizon >= 1, "env.horizon", "must be >= 1");
  require(env.step_size > 0.0, "env.step_size", "must be > 0");
  require(env.arena_half_width > 0.0, "env.arena_half_width", "must be > 0");
  require(env.reset_half_width >= 0.0 && env.reset_half_width <= env.arena_half_width, "env.reset_half_width",
          "must lie in [0, env.arena_half_width]");
  require(env.terminate_radius >= 0.0, "env.terminate_radius", "must be >= 0");
  require(skill_dim >= 1 && skill_dim <= 64, "skill_dim", "must lie in [1, 64]");
  require(hidden >= 1 && hidden <= 4096, "hidden", "must lie in [1, 4096]");
  require(dynamics_hidden >= 1 && dynamics_hidden <= 4096, "dynamics_hidden", "must lie in [1, 4096]");
  require(learner.gamma >= 0.0 && learner.gamma < 1.0, "gamma", "must lie in [0, 1)");
  require(learner.entropy_coef >= 0.0, "entropy_coef", "must be >= 0");
  require(learner.tau > 0.0 && learner.tau <= 1.0, "tau", "must lie in (0, 1]");
  require(learner.batch_size >= 1, "policy_batch", "must be >= 1");
  require(learner.lr_actor > 0.0, "lr_actor", "must be > 0");
  require(learner.lr_critic > 0.0, "lr_critic", "must be > 0");
  require(lr_dynamics > 0.0, "lr_dynamics", "must be > 0");
  require(dynamics_batch >= 1, "dynamics_batch", "must be >= 1");
  require(prior_samples >= 1, "prior_samples", "must be >= 1");
  require(is_clip >= 1.0, "is_clip", "must be >= 1");
  require(replay_capacity >= 1, "replay_capacity", "must be >= 1");
  require(newsteps >= 1, "newsteps", "must be >= 1");
  require(min_new_episodes >= 0, "min_new_episodes", "must be >= 0");
  require(sample_budget >= 0, "sample_budget", "must be >= 0");
  require(collectors >= 1 && collectors <= 256, "collectors", "must lie in [1, 256]");
  require(!sync || collectors == 1, "collectors", "synchronous mode runs exactly one collector");
  require(queue_capacity >= 1, "queue_capacity", "must be >= 1");
  require(checkpoint_every >= 0, "checkpoint_every", "must be >= 0");
  require(!output_dir.empty(), "output_dir", "must not be empty");
  for (const char* p : {"none", "s1", "s10", "l1", "l10", "onpolicy-dyn", "baseline-onpolicy"}) {
    if (preset == p) return;
  }
  throw ConfigError("preset: unknown preset '" + preset + "'");
}

void apply_preset(RunConfig& cfg, const std::string& name) {
  constexpr std::size_t kShort = 2000;
  constexpr std::size_t kLong = 50000;
  if (name == "none") {
  } else if (name == "s1") {
    cfg.replay_capacity = kShort;
    cfg.is_clip = 1.0;
  } else if (name == "s10") {
    cfg.replay_capacity = kShort;
    cfg.is_clip = 10.0;
  } else if (name == "l1") {
    cfg.replay_capacity = kLong;
    cfg.is_clip = 1.0;
  } else if (name == "l10") {
    cfg.replay_capacity = kLong;
    cfg.is_clip = 10.0;
  } else if (name == "onpolicy-dyn") {
    cfg.onpolicy_dynamics = true;
  } else if (name == "baseline-onpolicy") {
    cfg.newsteps = 2000;
    cfg.replay_capacity = 2000;
    cfg.onpolicy_dynamics = true;
    cfg.is_clip = 1.0;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  cfg.preset = name;
}

RunConfig parse_config(const std::string& text, const std::optional<std::string>& preset_override) {
  struct Entry {
    int line;
    std::string key;
    std::string value;
  };
  std::vector<Entry> entries;
  std::map<std::string, int> seen;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    Entry e{line_no, trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
    if (e.key != "preset" && !find_key(e.key)) {
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + e.key + "'");
    }
    if (auto [it, inserted] = seen.emplace(e.key, line_no); !inserted) {
      throw ConfigError("line " + std::to_string(line_no) + ": key '" + e.key + "' already set on line " +
                        std::to_string(it->second));
    }
    entries.push_back(std::move(e));
  }

  RunConfig cfg;
  std::string preset = "none";
  int preset_line = 0;
  for (const auto& e : entries) {
    if (e.key == "preset") {
      preset = e.value;
      preset_line = e.line;
    }
  }
  if (preset_override) {
    preset = *preset_override;
    preset_line = 0;
  }
  try {
    apply_preset(cfg, preset);
  } catch (const ConfigError& err) {
    if (preset_line > 0) throw ConfigError("line " + std::to_string(preset_line) + ": " + err.what());
    throw;
  }
  for (const auto& e : entries) {
    if (e.key == "preset") continue;
    try {
      find_key(e.key)->set(cfg, e.value);
    } catch (const ConfigError& err) {
      throw ConfigError("line " + std::to_string(e.line) + ": " + e.key + ": " + err.what());
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& err) {
    const std::string msg = err.what();
    const std::string key = msg.substr(0, msg.find(':'));
    const auto it = seen.find(key);
    if (it != seen.end()) throw ConfigError("line " + std::to_string(it->second) + ": " + msg);
    throw;
  }
  return cfg;
}

RunConfig load_config(const std::string& path, const std::optional<std::string>& preset_override) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str(), preset_override);
  } catch (const ConfigError& err) {
    throw ConfigError(path + ": " + err.what());
  }
}

std::string format_config(const RunConfig& cfg) {
  std::string out = "preset = " + cfg.preset + "\n";
  for (const auto& k : keys()) out += std::string(k.name) + " = " + k.get(cfg) + "\n";
  return out;
}

std::string config_hash(const RunConfig& cfg) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : format_config(cfg)) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace mi_skills
