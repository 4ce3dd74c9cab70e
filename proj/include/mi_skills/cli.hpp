#pragma once

#include "mi_skills/config.hpp"
#include "mi_skills/planner.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

// Entry points behind the mi-skills executable. Each returns its report; file output is
// done by the caller or, for train, into the run directory.
namespace mi_skills::cli {

inline constexpr int kManifestFormatVersion = 1;

// $MI_SKILLS_OUT when set, else the current directory.
std::filesystem::path output_root();

struct TrainOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> preset;
  bool sync = false;
};

// Resolves the config with CLI overrides applied (seed, preset, --sync forces one synchronous collector).
RunConfig resolve_train_config(const TrainOptions& opts);

// <output_root>/<output_dir>/<preset>-seed<N>
std::filesystem::path run_directory(const RunConfig& cfg);

// Runs training and writes config.resolved, manifest.json, metrics, checkpoints. Returns the run directory.
std::filesystem::path cmd_train(const TrainOptions& opts);
std::filesystem::path train_config(const RunConfig& cfg);

struct EvalOptions {
  std::string ckpt;
  std::size_t count = 8;
  int horizon = 50;
  std::uint64_t seed = 0;
  double min_separation_deg = 45.0;
  double min_displacement = 0.1;  // shorter displacements have no meaningful direction
};

nlohmann::json cmd_eval_skills(const EvalOptions& opts);

// Largest subset of directions with all pairwise angles >= min_deg. Exact up to 20 directions, greedy beyond.
std::vector<std::size_t> max_separated_subset(const std::vector<Vec>& directions, double min_deg);

struct PlanOptions {
  std::string ckpt;
  Vec goal;
  planner::PlanConfig plan;
  std::uint64_t seed = 0;
};

struct PlanReport {
  planner::MpcResult result;
  std::string csv;  // step, reduced coords, skill coords, distance; one row per executed step plus the start
};

PlanReport cmd_plan(const PlanOptions& opts);
std::string trajectory_csv(const planner::MpcResult& result, std::size_t reduced_dim, std::size_t skill_dim);

struct DiagOptions {
  std::string ckpt;
  std::string dump;
};

nlohmann::json cmd_diag(const DiagOptions& opts);

struct PlotData {
  std::string curves_csv;     // variant,run,samples,mean_intrinsic_reward
  std::string aggregate_csv;  // variant,samples,median,min,max
};

PlotData cmd_plot_data(const std::vector<std::string>& run_dirs);

struct Curve {
  std::vector<double> samples;
  std::vector<double> values;
};

Curve read_reward_curve(const std::filesystem::path& metrics_csv);
// Piecewise-linear interpolation of `curve` at x; x must lie inside its sample range.
double interpolate(const Curve& curve, double x);

}  // namespace mi_skills::cli
