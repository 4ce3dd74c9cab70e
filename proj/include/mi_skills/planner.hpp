#pragma once

#include "mi_skills/dads.hpp"
#include "mi_skills/envs.hpp"
#include "mi_skills/sac.hpp"
#include "mi_skills/transition.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

// Model-predictive control over skill sequences using the skill-dynamics mean.
namespace mi_skills::planner {

// Predicted reduced-state delta for (reduced state, skill).
using DeltaPredictor = std::function<Vec(const Vec& reduced, const Vec& skill)>;

DeltaPredictor model_predictor(const dads::DynamicsModel& model);

struct PlanConfig {
  std::size_t candidates = 64;
  int plan_horizon = 4;  // skills per plan
  int skill_hold = 5;    // env steps per skill
  int refine_iters = 1;  // 0 = pure random shooting
  double elite_fraction = 0.1;
  double goal_radius = 0.2;
  double progress_weight = 0.1;
  int step_budget = 200;

  void validate() const;
};

struct Goal {
  Vec target;
  std::vector<bool> wraps;  // angular metric on these coordinates
};

double goal_distance(const Vec& reduced, const Goal& goal);

// Points r0, r1, ..., r_{len * hold}, iterating r <- wrap(r + mu(r, z)).
std::vector<Vec> rollout_skills(const DeltaPredictor& predict, const Vec& r0, std::span<const SkillVector> skills,
                                int hold, const std::vector<bool>& wraps);

// distance(final, goal) + progress_weight * mean over steps t >= 1 of distance(r_t, goal).
double plan_cost(std::span<const Vec> trajectory, const Goal& goal, double progress_weight);

using Candidate = std::vector<SkillVector>;

struct Plan {
  Candidate skills;
  double cost = 0.0;
  std::size_t index = 0;  // position among all evaluated candidates
  std::size_t evaluated = 0;
};

// Argmin over the given candidates, lowest index on ties.
Plan plan_from_candidates(const DeltaPredictor& predict, const Vec& r0, const Goal& goal, const PlanConfig& cfg,
                          std::span<const Candidate> candidates);

// Random shooting from the prior, with optional elite refinement rounds.
Plan plan(const DeltaPredictor& predict, std::size_t skill_dim, const Vec& r0, const Goal& goal,
          const PlanConfig& cfg, Rng& rng);

struct MpcStep {
  int step = 0;
  Vec reduced;
  Vec skill;  // skill active on the step leading here; empty for the start row
  double distance = 0.0;
};

struct MpcResult {
  std::vector<MpcStep> trajectory;  // executed steps + 1 rows
  bool success = false;
  int steps = 0;
  std::string failure_reason;
};

// Chooses the skill to execute next from the current reduced state.
using SkillChooser = std::function<SkillVector(const Vec& reduced, Rng& rng)>;

// Runs skills through the actor's mean action, holding each for cfg.skill_hold steps,
// until within goal_radius or the step budget is spent.
MpcResult execute_skills(const envs::Environment& env, const sac::Actor& actor, const envs::State& start,
                         const Goal& goal, const PlanConfig& cfg, const SkillChooser& choose, Rng& rng);

MpcResult mpc_execute(const envs::Environment& env, const sac::Actor& actor, const DeltaPredictor& predict,
                      const envs::State& start, const Goal& goal, const PlanConfig& cfg, Rng& rng);

// Baseline: a fresh prior skill every cfg.skill_hold steps.
MpcResult random_skill_execute(const envs::Environment& env, const sac::Actor& actor, const envs::State& start,
                               const Goal& goal, const PlanConfig& cfg, Rng& rng);

}  // namespace mi_skills::planner
