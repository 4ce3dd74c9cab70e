#include "mi_skills/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

using namespace mi_skills;

namespace {

Vec parse_goal(const std::string& text) {
  std::vector<double> xs;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      xs.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw ConfigError("--goal: cannot parse '" + cell + "' as a number");
    }
  }
  if (xs.empty()) throw ConfigError("--goal: expected comma-separated coordinates");
  return Eigen::Map<const Vec>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

void emit(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mutual-information skill discovery: training, evaluation and planning"};
  app.require_subcommand(1);

  cli::TrainOptions train;
  std::uint64_t train_seed = 0;
  std::string train_preset;
  auto* c_train = app.add_subcommand("train", "Train skills from a config file");
  c_train->add_option("--config", train.config_path, "Experiment config")->required();
  auto* seed_opt = c_train->add_option("--seed", train_seed, "Override the config seed");
  auto* preset_opt = c_train->add_option("--preset", train_preset, "s1|s10|l1|l10|onpolicy-dyn|baseline-onpolicy|none");
  c_train->add_flag("--sync", train.sync, "Single collector, strict alternation");

  cli::EvalOptions eval;
  std::string eval_out;
  auto* c_eval = app.add_subcommand("eval-skills", "Displacement statistics of prior-sampled skills");
  c_eval->add_option("--ckpt", eval.ckpt, "Checkpoint")->required();
  c_eval->add_option("--count", eval.count, "Number of skills")->required();
  c_eval->add_option("--horizon", eval.horizon, "Steps per skill")->required();
  c_eval->add_option("--seed", eval.seed, "Sampling seed");
  c_eval->add_option("--min-separation", eval.min_separation_deg, "Pairwise separation threshold in degrees");
  c_eval->add_option("--min-displacement", eval.min_displacement, "Shortest displacement counted as a direction");
  c_eval->add_option("--out", eval_out, "Write the JSON report here instead of stdout");

  cli::PlanOptions plan;
  std::string goal_text, plan_out;
  auto* c_plan = app.add_subcommand("plan", "Reach a goal by planning over skills");
  c_plan->add_option("--ckpt", plan.ckpt, "Checkpoint")->required();
  c_plan->add_option("--goal", goal_text, "Goal coordinates, e.g. 1.0,-0.5")->required();
  c_plan->add_option("--k", plan.plan.candidates, "Candidate sequences");
  c_plan->add_option("--hp", plan.plan.plan_horizon, "Skills per plan");
  c_plan->add_option("--hz", plan.plan.skill_hold, "Environment steps per skill");
  c_plan->add_option("--refine", plan.plan.refine_iters, "Elite refinement iterations");
  c_plan->add_option("--radius", plan.plan.goal_radius, "Success radius");
  c_plan->add_option("--budget", plan.plan.step_budget, "Environment step budget");
  c_plan->add_option("--seed", plan.seed, "Seed for the start state and planner");
  c_plan->add_option("--out", plan_out, "Write the trajectory CSV here instead of stdout");

  cli::DiagOptions diag;
  std::string diag_out;
  auto* c_diag = app.add_subcommand("diag", "Importance-weight diagnostics over a replay dump");
  c_diag->add_option("--ckpt", diag.ckpt, "Checkpoint")->required();
  c_diag->add_option("--dump", diag.dump, "Replay dump")->required();
  c_diag->add_option("--out", diag_out, "Write the JSON report here instead of stdout");

  std::vector<std::string> plot_dirs;
  std::string plot_out;
  auto* c_plot = app.add_subcommand("plot-data", "Aligned reward curves across runs");
  c_plot->add_option("dirs", plot_dirs, "Run directories")->required();
  c_plot->add_option("--out", plot_out, "Output directory (default $MI_SKILLS_OUT/plot_data)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*c_train) {
      if (*seed_opt) train.seed = train_seed;
      if (*preset_opt) train.preset = train_preset;
      const auto dir = cli::cmd_train(train);
      std::cout << dir.string() << "\n";
    } else if (*c_eval) {
      emit(cli::cmd_eval_skills(eval).dump(2) + "\n", eval_out);
    } else if (*c_plan) {
      plan.goal = parse_goal(goal_text);
      const auto report = cli::cmd_plan(plan);
      emit(report.csv, plan_out);
      std::cerr << "success=" << (report.result.success ? "true" : "false") << " steps=" << report.result.steps;
      if (!report.result.success) std::cerr << " reason=\"" << report.result.failure_reason << "\"";
      std::cerr << "\n";
    } else if (*c_diag) {
      emit(cli::cmd_diag(diag).dump(2) + "\n", diag_out);
    } else if (*c_plot) {
      const auto data = cli::cmd_plot_data(plot_dirs);
      const std::filesystem::path dir = plot_out.empty() ? cli::output_root() / "plot_data" : std::filesystem::path(plot_out);
      std::filesystem::create_directories(dir);
      emit(data.curves_csv, (dir / "curves.csv").string());
      emit(data.aggregate_csv, (dir / "aggregate.csv").string());
      std::cout << dir.string() << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
