#pragma once

#include "mi_skills/distributions.hpp"
#include "mi_skills/nn.hpp"

#include <functional>
#include <vector>

// Skill-conditioned soft actor-critic with twin critics and Polyak-averaged targets.
namespace mi_skills::sac {

struct LearnerConfig {
  double gamma = 0.99;
  double entropy_coef = 0.1;
  double tau = 0.005;
  std::size_t batch_size = 256;
  std::size_t steps_per_round = 64;
  double lr_actor = 3e-4;
  double lr_critic = 3e-4;

  void validate() const;
};

// Batched squashed actions with their log-densities.
struct ActionBatch {
  Mat actions;
  Vec log_probs;
};

// pi(a | s, z): network over (s, z) emitting a mean and a raw log-stddev per action dim.
class Actor {
 public:
  Actor(std::size_t state_dim, std::size_t skill_dim, std::size_t action_dim, std::size_t hidden, Rng& rng);
  Actor(std::size_t state_dim, std::size_t skill_dim, std::size_t action_dim, nn::ParamVector params);

  std::size_t state_dim() const { return state_dim_; }
  std::size_t skill_dim() const { return skill_dim_; }
  std::size_t action_dim() const { return action_dim_; }
  const nn::ParamVector& params() const { return params_; }
  nn::ParamVector& params() { return params_; }

  nn::DiagGaussian distribution(const Vec& state, const Vec& skill) const;
  nn::SquashedSample sample(const Vec& state, const Vec& skill, Rng& rng) const;
  double log_prob(const Vec& state, const Vec& skill, const Vec& action) const;
  // tanh of the Gaussian mean; the deterministic evaluation policy.
  Vec mean_action(const Vec& state, const Vec& skill) const;

  ActionBatch sample_batch(const Mat& states, const Mat& skills, const Mat& noise) const;
  Vec log_prob_batch(const Mat& states, const Mat& skills, const Mat& actions) const;

  Mat inputs(const Mat& states, const Mat& skills) const;

 private:
  Vec input_row(const Vec& state, const Vec& skill) const;
  std::size_t state_dim_;
  std::size_t skill_dim_;
  std::size_t action_dim_;
  nn::ParamVector params_;
};

// Q1, Q2 over (s, a, z) with their target copies and optimizer states.
struct CriticPair {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::size_t skill_dim = 0;
  nn::ParamVector q1, q2, target1, target2;
  nn::AdamState opt1, opt2;

  static CriticPair create(std::size_t state_dim, std::size_t action_dim, std::size_t skill_dim,
                           std::size_t hidden, double lr, Rng& rng);

  Mat inputs(const Mat& states, const Mat& actions, const Mat& skills) const;
};

Vec critic_values(const nn::ParamVector& critic, const Mat& inputs);

struct SacBatch {
  Mat states;
  Mat skills;
  Mat actions;
  Mat next_states;
  Vec rewards;
  Vec terminal;  // 1 for absorbing terminations, 0 otherwise (including horizon exhaustion)

  std::size_t size() const { return static_cast<std::size_t>(states.rows()); }
};

// Draws next actions for target computation: (next_states, skills, rng) -> actions + log-probs.
using NextActionFn = std::function<ActionBatch(const Mat& next_states, const Mat& skills, Rng& rng)>;

// y = r + gamma (1 - terminal) (min(target Q1, target Q2)(s', a', z) - beta log pi(a'|s', z)).
Vec critic_targets(const SacBatch& batch, const NextActionFn& next_action, const CriticPair& critics,
                   const LearnerConfig& cfg, Rng& rng);
Vec critic_targets(const SacBatch& batch, const Actor& actor, const CriticPair& critics,
                   const LearnerConfig& cfg, Rng& rng);

using nn::LossGrad;

// Mean over the batch of (Q(s, a, z) - y)^2.
LossGrad critic_loss(const nn::ParamVector& critic, const Mat& inputs, const Vec& targets);

struct CriticStats {
  double loss1 = 0.0;
  double loss2 = 0.0;
};

CriticStats critic_update(CriticPair& critics, const SacBatch& batch, const Vec& targets);

// Mean over the batch of beta log pi(a|s,z) - min(Q1, Q2)(s, a, z), with a reparameterized by `noise`.
LossGrad actor_loss(const Actor& actor, const CriticPair& critics, const Mat& states, const Mat& skills,
                    const Mat& noise, double entropy_coef);

struct ActorStats {
  double loss = 0.0;
};

ActorStats actor_update(Actor& actor, nn::AdamState& opt, const CriticPair& critics, const SacBatch& batch,
                        const LearnerConfig& cfg, Rng& rng);

// Target <- tau * online + (1 - tau) * target, elementwise.
void target_update(CriticPair& critics, double tau);

}  // namespace mi_skills::sac
