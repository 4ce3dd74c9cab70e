#pragma once

#include "mi_skills/distributions.hpp"
#include "mi_skills/envs.hpp"
#include "mi_skills/nn.hpp"
#include "mi_skills/sac.hpp"
#include "mi_skills/transition.hpp"

#include <span>
#include <vector>

// Mutual-information skill machinery: prior, skill dynamics q(s'|s,z), the
// intrinsic reward, and importance weights for off-policy dynamics training.
namespace mi_skills::dads {

// Each coordinate i.i.d. uniform on [-1, 1].
SkillVector sample_prior(std::size_t dim, Rng& rng);
std::vector<SkillVector> sample_priors(std::size_t count, std::size_t dim, Rng& rng);

// Diagonal Gaussian over the reduced-state delta, conditioned on (reduced state, skill).
class DynamicsModel {
 public:
  DynamicsModel(std::size_t reduced_dim, std::size_t skill_dim, std::size_t hidden, Rng& rng);
  DynamicsModel(std::size_t reduced_dim, std::size_t skill_dim, nn::ParamVector params);

  std::size_t reduced_dim() const { return reduced_dim_; }
  std::size_t skill_dim() const { return skill_dim_; }
  const nn::ParamVector& params() const { return params_; }
  nn::ParamVector& params() { return params_; }

  nn::DiagGaussian predict(const Vec& reduced, const Vec& skill) const;
  Vec mean_delta(const Vec& reduced, const Vec& skill) const;
  double log_prob_delta(const Vec& reduced, const Vec& skill, const Vec& delta) const;

  // Rows of `inputs` are [reduced, skill]; returns log q(delta_row | input_row) per row.
  Vec log_prob_batch(const Mat& inputs, const Mat& deltas) const;
  Mat inputs(const Mat& reduced, const Mat& skills) const;

 private:
  std::size_t reduced_dim_;
  std::size_t skill_dim_;
  nn::ParamVector params_;
};

// log q(reduced_delta(s, s') | reduce(s), z).
double dynamics_log_prob(const DynamicsModel& model, const envs::Environment& env, const envs::State& s,
                         const SkillVector& z, const envs::State& s_next);

// One round's reward setting: the current model and the L prior draws shared by every relabeled row.
struct RewardContext {
  RewardContext(const DynamicsModel& model, const envs::Environment& env, std::vector<SkillVector> priors);

  const DynamicsModel* model;
  const envs::Environment* env;
  std::vector<SkillVector> priors;
};

double log_sum_exp(std::span<const double> xs);

// log q(z) - logsumexp_i log q(z_i) + log L.
double intrinsic_reward_from_log_probs(double log_q_skill, std::span<const double> log_q_priors);

double intrinsic_reward(const RewardContext& ctx, const envs::State& s, const SkillVector& z,
                        const envs::State& s_next);

// clip(pi / pi_c, 1/alpha, alpha) from log-densities. Throws NumericError on non-finite input.
double is_weight(double logp_current, double logp_behavior, double alpha);

struct DynamicsBatch {
  Mat inputs;   // [reduced state, skill]
  Mat deltas;   // reduced_delta(s, s')
  Vec weights;  // importance weights

  std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
};

DynamicsBatch make_dynamics_batch(const envs::Environment& env, std::span<const Transition> rows,
                                  std::span<const double> weights);

// -(1/B) sum_j w_j log q(delta_j | input_j) and its parameter gradient.
nn::LossGrad dynamics_loss(const DynamicsModel& model, const DynamicsBatch& batch);

struct DynamicsStats {
  double loss = 0.0;
  double mean_log_prob = 0.0;  // unweighted, before the step
};

DynamicsStats dynamics_update(DynamicsModel& model, nn::AdamState& opt, const DynamicsBatch& batch);

struct TrajectoryWeight {
  double weight = 1.0;
  bool overflow = false;  // the running product exceeded the double range; weight is +inf
};

// Running products prod_{i<=t} exp(logp_current_i - logp_behavior_i), evaluated in log space.
std::vector<TrajectoryWeight> cumulative_ratio_weights(std::span<const double> logp_current,
                                                       std::span<const double> logp_behavior);

// Unclipped per-episode product-of-ratios weights. Diagnostic only.
std::vector<TrajectoryWeight> unbiased_trajectory_weights(std::span<const Transition> episode,
                                                          const sac::Actor& current);

}  // namespace mi_skills::dads
