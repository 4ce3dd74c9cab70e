#include "mi_skills/dads.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mi_skills::dads {

SkillVector sample_prior(std::size_t dim, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec z(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = u(rng);
  return SkillVector(std::move(z));
}

std::vector<SkillVector> sample_priors(std::size_t count, std::size_t dim, Rng& rng) {
  std::vector<SkillVector> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample_prior(dim, rng));
  return out;
}

DynamicsModel::DynamicsModel(std::size_t reduced_dim, std::size_t skill_dim, std::size_t hidden, Rng& rng)
    : reduced_dim_(reduced_dim), skill_dim_(skill_dim) {
  const std::size_t sizes[] = {reduced_dim + skill_dim, hidden, hidden, 2 * reduced_dim};
  params_ = nn::init_mlp(sizes, rng);
}

DynamicsModel::DynamicsModel(std::size_t reduced_dim, std::size_t skill_dim, nn::ParamVector params)
    : reduced_dim_(reduced_dim), skill_dim_(skill_dim), params_(std::move(params)) {
  if (nn::mlp_input_dim(params_) != reduced_dim + skill_dim || nn::mlp_output_dim(params_) != 2 * reduced_dim) {
    throw ConfigError("dynamics parameters do not match (reduced state, skill) dimensions");
  }
}

nn::DiagGaussian DynamicsModel::predict(const Vec& reduced, const Vec& skill) const {
  if (static_cast<std::size_t>(reduced.size()) != reduced_dim_ || static_cast<std::size_t>(skill.size()) != skill_dim_) {
    throw ConfigError("dynamics input has wrong reduced-state or skill dimension");
  }
  Vec x(reduced.size() + skill.size());
  x << reduced, skill;
  const Vec out = nn::mlp_forward(params_, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
  const auto d = static_cast<Eigen::Index>(reduced_dim_);
  return nn::gaussian_from_head(out.head(d), out.tail(d));
}

Vec DynamicsModel::mean_delta(const Vec& reduced, const Vec& skill) const { return predict(reduced, skill).mean; }

double DynamicsModel::log_prob_delta(const Vec& reduced, const Vec& skill, const Vec& delta) const {
  return nn::gaussian_log_prob(predict(reduced, skill), delta);
}

Mat DynamicsModel::inputs(const Mat& reduced, const Mat& skills) const {
  if (static_cast<std::size_t>(reduced.cols()) != reduced_dim_ || static_cast<std::size_t>(skills.cols()) != skill_dim_ ||
      reduced.rows() != skills.rows()) {
    throw ConfigError("dynamics batch has wrong shape");
  }
  Mat out(reduced.rows(), reduced.cols() + skills.cols());
  out << reduced, skills;
  return out;
}

namespace {

double head_log_prob(const Mat& out, Eigen::Index r, const Mat& deltas, Eigen::Index d) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double log_std = nn::clamp_log_std(out(r, d + i));
    const double z = (deltas(r, i) - out(r, i)) / std::exp(log_std);
    acc += -log_std - nn::kHalfLog2Pi - 0.5 * z * z;
  }
  return acc;
}

}  // namespace

Vec DynamicsModel::log_prob_batch(const Mat& inputs, const Mat& deltas) const {
  const auto d = static_cast<Eigen::Index>(reduced_dim_);
  if (deltas.rows() != inputs.rows() || deltas.cols() != d) throw ConfigError("delta batch has wrong shape");
  const auto cache = nn::mlp_forward_batch(params_, inputs);
  Vec lp(inputs.rows());
  for (Eigen::Index r = 0; r < lp.size(); ++r) lp[r] = head_log_prob(cache.output(), r, deltas, d);
  return lp;
}

double dynamics_log_prob(const DynamicsModel& model, const envs::Environment& env, const envs::State& s,
                         const SkillVector& z, const envs::State& s_next) {
  return model.log_prob_delta(env.reduce(s), z.values(), env.reduced_delta(s, s_next));
}

RewardContext::RewardContext(const DynamicsModel& m, const envs::Environment& e, std::vector<SkillVector> p)
    : model(&m), env(&e), priors(std::move(p)) {
  if (priors.empty()) throw ConfigError("reward needs at least one prior sample");
  for (const auto& z : priors) {
    if (z.dim() != m.skill_dim()) throw ConfigError("prior sample has wrong skill dimension");
  }
}

double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

double intrinsic_reward_from_log_probs(double log_q_skill, std::span<const double> log_q_priors) {
  if (log_q_priors.empty()) throw ConfigError("reward needs at least one prior sample");
  const double m = *std::max_element(log_q_priors.begin(), log_q_priors.end());
  double acc = 0.0;
  for (double x : log_q_priors) acc += std::exp(x - m);
  const double r = (log_q_skill - m) - std::log(acc) + std::log(static_cast<double>(log_q_priors.size()));
  if (!std::isfinite(r)) throw NumericError("intrinsic reward is not finite");
  return r;
}

double intrinsic_reward(const RewardContext& ctx, const envs::State& s, const SkillVector& z,
                        const envs::State& s_next) {
  const DynamicsModel& model = *ctx.model;
  const auto L = static_cast<Eigen::Index>(ctx.priors.size());
  const auto dr = static_cast<Eigen::Index>(model.reduced_dim());
  const auto dz = static_cast<Eigen::Index>(model.skill_dim());
  if (static_cast<Eigen::Index>(z.dim()) != dz) throw ConfigError("skill has wrong dimension");
  const Vec reduced = ctx.env->reduce(s);
  const Vec delta = ctx.env->reduced_delta(s, s_next);

  Mat in(L + 1, dr + dz);
  Mat deltas(L + 1, dr);
  for (Eigen::Index r = 0; r <= L; ++r) {
    in.row(r).head(dr) = reduced.transpose();
    in.row(r).tail(dz) = (r == 0 ? z : ctx.priors[static_cast<std::size_t>(r - 1)]).values().transpose();
    deltas.row(r) = delta.transpose();
  }
  const Vec lp = model.log_prob_batch(in, deltas);
  return intrinsic_reward_from_log_probs(
      lp[0], std::span<const double>(lp.data() + 1, static_cast<std::size_t>(L)));
}

double is_weight(double logp_current, double logp_behavior, double alpha) {
  if (!(alpha >= 1.0)) throw ConfigError("importance clip alpha must be >= 1");
  if (!std::isfinite(logp_current) || !std::isfinite(logp_behavior)) {
    throw NumericError("importance weight log-probabilities are not finite");
  }
  const double w = std::exp(logp_current - logp_behavior);
  return std::clamp(w, 1.0 / alpha, alpha);
}

DynamicsBatch make_dynamics_batch(const envs::Environment& env, std::span<const Transition> rows,
                                  std::span<const double> weights) {
  if (rows.size() != weights.size()) throw ConfigError("dynamics batch and weights differ in length");
  const auto& spec = env.spec();
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto dr = static_cast<Eigen::Index>(spec.reduced_dim);
  const Eigen::Index dz = rows.empty() ? 0 : rows[0].z.values().size();
  DynamicsBatch b{Mat(n, dr + dz), Mat(n, dr), Vec(n)};
  for (Eigen::Index r = 0; r < n; ++r) {
    const Transition& t = rows[static_cast<std::size_t>(r)];
    if (t.z.values().size() != dz) throw ConfigError("mixed skill dimensions in dynamics batch");
    b.inputs.row(r).head(dr) = env.reduce(t.s).transpose();
    b.inputs.row(r).tail(dz) = t.z.values().transpose();
    b.deltas.row(r) = env.reduced_delta(t.s, t.s_next).transpose();
    b.weights[r] = weights[static_cast<std::size_t>(r)];
  }
  return b;
}

nn::LossGrad dynamics_loss(const DynamicsModel& model, const DynamicsBatch& batch) {
  const auto d = static_cast<Eigen::Index>(model.reduced_dim());
  const Eigen::Index n = batch.inputs.rows();
  if (n == 0) throw ConfigError("dynamics batch is empty");
  if (batch.deltas.rows() != n || batch.deltas.cols() != d || batch.weights.size() != n) {
    throw ConfigError("dynamics batch has inconsistent shapes");
  }
  const auto cache = nn::mlp_forward_batch(model.params(), batch.inputs);
  const Mat& out = cache.output();
  const double inv_n = 1.0 / static_cast<double>(n);
  Mat d_out(n, 2 * d);
  double loss = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const double w = batch.weights[r];
    loss -= inv_n * w * head_log_prob(out, r, batch.deltas, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      const double raw = out(r, d + i);
      const double var = std::exp(2.0 * nn::clamp_log_std(raw));
      const double err = batch.deltas(r, i) - out(r, i);
      d_out(r, i) = -inv_n * w * err / var;
      const bool free = raw > nn::kLogStdMin && raw < nn::kLogStdMax;
      d_out(r, d + i) = free ? -inv_n * w * (-1.0 + err * err / var) : 0.0;
    }
  }
  if (!std::isfinite(loss)) throw NumericError("dynamics loss is not finite");
  nn::LossGrad g;
  g.loss = loss;
  g.grad = nn::mlp_backward(model.params(), cache, d_out).params;
  return g;
}

DynamicsStats dynamics_update(DynamicsModel& model, nn::AdamState& opt, const DynamicsBatch& batch) {
  const nn::LossGrad g = dynamics_loss(model, batch);
  DynamicsStats stats;
  stats.loss = g.loss;
  stats.mean_log_prob = model.log_prob_batch(batch.inputs, batch.deltas).mean();
  nn::adam_step(opt, model.params(), g.grad);
  return stats;
}

std::vector<TrajectoryWeight> cumulative_ratio_weights(std::span<const double> logp_current,
                                                       std::span<const double> logp_behavior) {
  if (logp_current.size() != logp_behavior.size()) throw ConfigError("log-probability sequences differ in length");
  std::vector<TrajectoryWeight> out(logp_current.size());
  const double log_max = std::log(std::numeric_limits<double>::max());
  double acc = 0.0;
  for (std::size_t t = 0; t < out.size(); ++t) {
    if (!std::isfinite(logp_current[t]) || !std::isfinite(logp_behavior[t])) {
      throw NumericError("log-probability at step " + std::to_string(t) + " is not finite");
    }
    acc += logp_current[t] - logp_behavior[t];
    if (acc > log_max) {
      out[t] = {std::numeric_limits<double>::infinity(), true};
    } else {
      out[t] = {std::exp(acc), false};
    }
  }
  return out;
}

std::vector<TrajectoryWeight> unbiased_trajectory_weights(std::span<const Transition> episode,
                                                          const sac::Actor& current) {
  std::vector<double> cur(episode.size());
  std::vector<double> beh(episode.size());
  for (std::size_t t = 0; t < episode.size(); ++t) {
    cur[t] = current.log_prob(episode[t].s.x, episode[t].z.values(), episode[t].a);
    beh[t] = episode[t].logp_behavior;
  }
  return cumulative_ratio_weights(cur, beh);
}

}  // namespace mi_skills::dads
