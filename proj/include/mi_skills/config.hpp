#pragma once

#include "mi_skills/envs.hpp"
#include "mi_skills/sac.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace mi_skills {

struct RunConfig {
  envs::EnvConfig env;
  std::size_t skill_dim = 2;
  std::size_t hidden = 128;
  std::size_t dynamics_hidden = 128;

  sac::LearnerConfig learner;  // batch_size is B_pi, steps_per_round is T_pi
  double lr_dynamics = 3e-4;
  std::size_t dynamics_steps = 8;    // T_q
  std::size_t dynamics_batch = 256;  // B_q
  std::size_t prior_samples = 100;   // L

  double is_clip = 10.0;  // alpha
  std::size_t replay_capacity = 2000;
  std::int64_t newsteps = 500;
  std::int64_t min_new_episodes = 0;
  bool onpolicy_dynamics = false;

  std::string preset = "none";
  std::uint64_t seed = 0;
  std::int64_t sample_budget = 150000;
  std::size_t collectors = 1;
  bool sync = true;
  bool lockstep = false;  // async only: the trainer drains each episode before collectors continue
  std::size_t queue_capacity = 64;
  std::int64_t checkpoint_every = 0;  // rounds; 0 writes only the initial and final checkpoints
  std::string output_dir = "runs/default";

  // Throws ConfigError naming the offending key.
  void validate() const;
};

// s1, s10, l1, l10, onpolicy-dyn, baseline-onpolicy, or none.
void apply_preset(RunConfig& cfg, const std::string& name);

// Flat "key = value" text; '#' starts a comment. Resolution order: defaults, then the preset
// (preset_override if given, else the file's preset key), then the file's other keys.
// Unknown or repeated keys and bad values raise ConfigError with the line number.
RunConfig parse_config(const std::string& text, const std::optional<std::string>& preset_override = std::nullopt);
RunConfig load_config(const std::string& path, const std::optional<std::string>& preset_override = std::nullopt);

// Every key, fixed order, values printed so that parse_config(format_config(c)) == c.
std::string format_config(const RunConfig& cfg);

// FNV-1a over the resolved text, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

}  // namespace mi_skills
