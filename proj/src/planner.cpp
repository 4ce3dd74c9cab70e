#include "mi_skills/planner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mi_skills::planner {

DeltaPredictor model_predictor(const dads::DynamicsModel& model) {
  return [&model](const Vec& r, const Vec& z) { return model.mean_delta(r, z); };
}

void PlanConfig::validate() const {
  if (candidates < 1) throw ConfigError("planner candidates must be >= 1");
  if (plan_horizon < 1) throw ConfigError("planner horizon must be >= 1");
  if (skill_hold < 1) throw ConfigError("skill hold must be >= 1");
  if (refine_iters < 0) throw ConfigError("refinement iterations must be >= 0");
  if (!(elite_fraction > 0.0 && elite_fraction <= 1.0)) throw ConfigError("elite fraction must lie in (0, 1]");
  if (!(goal_radius > 0.0)) throw ConfigError("goal radius must be > 0");
  if (!(progress_weight >= 0.0)) throw ConfigError("progress weight must be >= 0");
  if (step_budget < 0) throw ConfigError("step budget must be >= 0");
}

double goal_distance(const Vec& reduced, const Goal& goal) {
  if (reduced.size() != goal.target.size()) throw ConfigError("goal dimension does not match reduced state");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < reduced.size(); ++i) {
    const bool wrap = static_cast<std::size_t>(i) < goal.wraps.size() && goal.wraps[static_cast<std::size_t>(i)];
    const double d = wrap ? envs::angle_difference(reduced[i], goal.target[i]) : goal.target[i] - reduced[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

std::vector<Vec> rollout_skills(const DeltaPredictor& predict, const Vec& r0, std::span<const SkillVector> skills,
                                int hold, const std::vector<bool>& wraps) {
  if (hold < 1) throw ConfigError("skill hold must be >= 1");
  std::vector<Vec> out;
  out.reserve(skills.size() * static_cast<std::size_t>(hold) + 1);
  out.push_back(r0);
  Vec r = r0;
  for (const auto& z : skills) {
    for (int k = 0; k < hold; ++k) {
      const Vec mu = predict(r, z.values());
      if (mu.size() != r.size() || !mu.allFinite()) throw NumericError("non-finite skill-dynamics prediction");
      r += mu;
      for (Eigen::Index i = 0; i < r.size(); ++i) {
        if (static_cast<std::size_t>(i) < wraps.size() && wraps[static_cast<std::size_t>(i)]) {
          r[i] = envs::wrap_angle(r[i]);
        }
      }
      out.push_back(r);
    }
  }
  return out;
}

double plan_cost(std::span<const Vec> trajectory, const Goal& goal, double progress_weight) {
  if (trajectory.empty()) throw ConfigError("empty trajectory");
  const double final_d = goal_distance(trajectory.back(), goal);
  if (trajectory.size() == 1) return final_d;
  double sum = 0.0;
  for (std::size_t t = 1; t < trajectory.size(); ++t) sum += goal_distance(trajectory[t], goal);
  return final_d + progress_weight * sum / static_cast<double>(trajectory.size() - 1);
}

namespace {

std::vector<double> score(const DeltaPredictor& predict, const Vec& r0, const Goal& goal, const PlanConfig& cfg,
                          std::span<const Candidate> candidates) {
  std::vector<double> costs(candidates.size());
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const auto traj = rollout_skills(predict, r0, candidates[k], cfg.skill_hold, goal.wraps);
    costs[k] = plan_cost(traj, goal, cfg.progress_weight);
  }
  return costs;
}

std::size_t argmin(const std::vector<double>& costs) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < costs.size(); ++k) {
    if (costs[k] < costs[best]) best = k;
  }
  return best;
}

}  // namespace

Plan plan_from_candidates(const DeltaPredictor& predict, const Vec& r0, const Goal& goal, const PlanConfig& cfg,
                          std::span<const Candidate> candidates) {
  if (candidates.empty()) throw ConfigError("no planning candidates");
  const auto costs = score(predict, r0, goal, cfg, candidates);
  const std::size_t best = argmin(costs);
  return {candidates[best], costs[best], best, candidates.size()};
}

Plan plan(const DeltaPredictor& predict, std::size_t skill_dim, const Vec& r0, const Goal& goal,
          const PlanConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto hp = static_cast<std::size_t>(cfg.plan_horizon);
  std::vector<Candidate> pool;
  pool.reserve(cfg.candidates * static_cast<std::size_t>(cfg.refine_iters + 1));
  std::vector<Candidate> batch(cfg.candidates);
  for (auto& c : batch) c = dads::sample_priors(hp, skill_dim, rng);
  std::vector<double> costs = score(predict, r0, goal, cfg, batch);
  pool.insert(pool.end(), batch.begin(), batch.end());

  const auto n_elite = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(cfg.elite_fraction * static_cast<double>(cfg.candidates))));
  std::vector<double> batch_costs = costs;
  for (int it = 0; it < cfg.refine_iters; ++it) {
    std::vector<std::size_t> order(batch.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return batch_costs[a] < batch_costs[b]; });
    const std::size_t m = std::min(n_elite, order.size());
    std::vector<Vec> mean(hp, Vec::Zero(static_cast<Eigen::Index>(skill_dim)));
    std::vector<Vec> var(hp, Vec::Zero(static_cast<Eigen::Index>(skill_dim)));
    for (std::size_t e = 0; e < m; ++e) {
      for (std::size_t h = 0; h < hp; ++h) mean[h] += batch[order[e]][h].values() / static_cast<double>(m);
    }
    for (std::size_t e = 0; e < m; ++e) {
      for (std::size_t h = 0; h < hp; ++h) {
        var[h] += (batch[order[e]][h].values() - mean[h]).cwiseAbs2() / static_cast<double>(m);
      }
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Candidate> next(cfg.candidates);
    for (auto& c : next) {
      c.reserve(hp);
      for (std::size_t h = 0; h < hp; ++h) {
        Vec z(static_cast<Eigen::Index>(skill_dim));
        for (Eigen::Index i = 0; i < z.size(); ++i) {
          z[i] = std::clamp(mean[h][i] + std::sqrt(var[h][i]) * normal(rng), -1.0, 1.0);
        }
        c.emplace_back(std::move(z));
      }
    }
    batch = std::move(next);
    batch_costs = score(predict, r0, goal, cfg, batch);
    costs.insert(costs.end(), batch_costs.begin(), batch_costs.end());
    pool.insert(pool.end(), batch.begin(), batch.end());
  }
  const std::size_t best = argmin(costs);
  return {pool[best], costs[best], best, pool.size()};
}

MpcResult execute_skills(const envs::Environment& env, const sac::Actor& actor, const envs::State& start,
                         const Goal& goal, const PlanConfig& cfg, const SkillChooser& choose, Rng& rng) {
  cfg.validate();
  MpcResult res;
  envs::State s = start;
  Vec r = env.reduce(s);
  res.trajectory.push_back({0, r, Vec(), goal_distance(r, goal)});
  if (res.trajectory.back().distance <= cfg.goal_radius) {
    res.success = true;
    return res;
  }
  while (res.steps < cfg.step_budget) {
    SkillVector z;
    try {
      z = choose(r, rng);
    } catch (const NumericError& e) {
      res.failure_reason = e.what();
      return res;
    }
    for (int k = 0; k < cfg.skill_hold && res.steps < cfg.step_budget; ++k) {
      const Vec a = actor.mean_action(s.x, z.values());
      envs::StepResult step;
      try {
        step = env.step(s, std::span<const double>(a.data(), static_cast<std::size_t>(a.size())));
      } catch (const std::exception& e) {
        res.failure_reason = std::string("environment fault: ") + e.what();
        return res;
      }
      s = step.next_state;
      ++res.steps;
      r = env.reduce(s);
      res.trajectory.push_back({res.steps, r, z.values(), goal_distance(r, goal)});
      if (res.trajectory.back().distance <= cfg.goal_radius) {
        res.success = true;
        return res;
      }
      if (step.terminated) {
        res.failure_reason = "environment terminated";
        return res;
      }
    }
  }
  res.failure_reason = "step budget exhausted";
  return res;
}

MpcResult mpc_execute(const envs::Environment& env, const sac::Actor& actor, const DeltaPredictor& predict,
                      const envs::State& start, const Goal& goal, const PlanConfig& cfg, Rng& rng) {
  const std::size_t dz = actor.skill_dim();
  const SkillChooser choose = [&](const Vec& r, Rng& g) {
    return plan(predict, dz, r, goal, cfg, g).skills.front();
  };
  return execute_skills(env, actor, start, goal, cfg, choose, rng);
}

MpcResult random_skill_execute(const envs::Environment& env, const sac::Actor& actor, const envs::State& start,
                               const Goal& goal, const PlanConfig& cfg, Rng& rng) {
  const std::size_t dz = actor.skill_dim();
  const SkillChooser choose = [dz](const Vec&, Rng& g) { return dads::sample_prior(dz, g); };
  return execute_skills(env, actor, start, goal, cfg, choose, rng);
}

}  // namespace mi_skills::planner
