#include "mi_skills/sac.hpp"

#include <cmath>
#include <string>

namespace mi_skills::sac {

namespace {

Mat standard_normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Mat concat_cols(std::initializer_list<const Mat*> parts) {
  Eigen::Index rows = (*parts.begin())->rows();
  Eigen::Index cols = 0;
  for (const Mat* p : parts) {
    if (p->rows() != rows) throw ConfigError("batch parts have different row counts");
    cols += p->cols();
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (const Mat* p : parts) {
    out.middleCols(at, p->cols()) = *p;
    at += p->cols();
  }
  return out;
}

void check_finite(const Vec& v, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw NumericError(std::string(what) + " is not finite at row " + std::to_string(i));
    }
  }
}

}  // namespace

void LearnerConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  if (!(entropy_coef >= 0.0)) throw ConfigError("entropy coefficient must be >= 0");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in (0, 1]");
  if (batch_size == 0) throw ConfigError("SAC batch size must be >= 1");
  if (!(lr_actor > 0.0) || !(lr_critic > 0.0)) throw ConfigError("learning rates must be > 0");
}

Actor::Actor(std::size_t state_dim, std::size_t skill_dim, std::size_t action_dim, std::size_t hidden,
             Rng& rng)
    : state_dim_(state_dim), skill_dim_(skill_dim), action_dim_(action_dim) {
  const std::size_t sizes[] = {state_dim + skill_dim, hidden, hidden, 2 * action_dim};
  params_ = nn::init_mlp(sizes, rng);
}

Actor::Actor(std::size_t state_dim, std::size_t skill_dim, std::size_t action_dim, nn::ParamVector params)
    : state_dim_(state_dim), skill_dim_(skill_dim), action_dim_(action_dim), params_(std::move(params)) {
  if (nn::mlp_input_dim(params_) != state_dim + skill_dim || nn::mlp_output_dim(params_) != 2 * action_dim) {
    throw ConfigError("actor parameters do not match (state, skill, action) dimensions");
  }
}

Vec Actor::input_row(const Vec& state, const Vec& skill) const {
  if (static_cast<std::size_t>(state.size()) != state_dim_ || static_cast<std::size_t>(skill.size()) != skill_dim_) {
    throw ConfigError("actor input has wrong state or skill dimension");
  }
  Vec x(state.size() + skill.size());
  x << state, skill;
  return x;
}

nn::DiagGaussian Actor::distribution(const Vec& state, const Vec& skill) const {
  const Vec x = input_row(state, skill);
  const Vec out = nn::mlp_forward(params_, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
  const auto d = static_cast<Eigen::Index>(action_dim_);
  return nn::gaussian_from_head(out.head(d), out.tail(d));
}

nn::SquashedSample Actor::sample(const Vec& state, const Vec& skill, Rng& rng) const {
  const auto dist = distribution(state, skill);
  return nn::tanh_gaussian_sample(dist, nn::standard_normal(action_dim_, rng));
}

double Actor::log_prob(const Vec& state, const Vec& skill, const Vec& action) const {
  return nn::tanh_gaussian_log_prob(distribution(state, skill), action);
}

Vec Actor::mean_action(const Vec& state, const Vec& skill) const {
  return distribution(state, skill).mean.array().tanh().matrix();
}

Mat Actor::inputs(const Mat& states, const Mat& skills) const {
  if (static_cast<std::size_t>(states.cols()) != state_dim_ || static_cast<std::size_t>(skills.cols()) != skill_dim_) {
    throw ConfigError("actor batch has wrong state or skill width");
  }
  return concat_cols({&states, &skills});
}

ActionBatch Actor::sample_batch(const Mat& states, const Mat& skills, const Mat& noise) const {
  const auto cache = nn::mlp_forward_batch(params_, inputs(states, skills));
  const Mat& out = cache.output();
  const auto d = static_cast<Eigen::Index>(action_dim_);
  if (noise.rows() != out.rows() || noise.cols() != d) throw ConfigError("noise batch has wrong shape");
  ActionBatch b{Mat(out.rows(), d), Vec(out.rows())};
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    double lp = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      const double log_std = nn::clamp_log_std(out(r, d + i));
      const double eps = noise(r, i);
      const double a = std::tanh(out(r, i) + std::exp(log_std) * eps);
      const double ac = nn::clamp_action(a);
      b.actions(r, i) = a;
      lp += -log_std - nn::kHalfLog2Pi - 0.5 * eps * eps - std::log(1.0 - ac * ac);
    }
    b.log_probs[r] = lp;
  }
  return b;
}

Vec Actor::log_prob_batch(const Mat& states, const Mat& skills, const Mat& actions) const {
  const auto cache = nn::mlp_forward_batch(params_, inputs(states, skills));
  const Mat& out = cache.output();
  const auto d = static_cast<Eigen::Index>(action_dim_);
  if (actions.rows() != out.rows() || actions.cols() != d) throw ConfigError("action batch has wrong shape");
  Vec lp(out.rows());
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      const double log_std = nn::clamp_log_std(out(r, d + i));
      const double ac = nn::clamp_action(actions(r, i));
      const double z = (std::atanh(ac) - out(r, i)) / std::exp(log_std);
      acc += -log_std - nn::kHalfLog2Pi - 0.5 * z * z - std::log(1.0 - ac * ac);
    }
    lp[r] = acc;
  }
  return lp;
}

CriticPair CriticPair::create(std::size_t state_dim, std::size_t action_dim, std::size_t skill_dim,
                              std::size_t hidden, double lr, Rng& rng) {
  CriticPair c;
  c.state_dim = state_dim;
  c.action_dim = action_dim;
  c.skill_dim = skill_dim;
  const std::size_t sizes[] = {state_dim + action_dim + skill_dim, hidden, hidden, 1};
  c.q1 = nn::init_mlp(sizes, rng);
  c.q2 = nn::init_mlp(sizes, rng);
  c.target1 = c.q1;
  c.target2 = c.q2;
  c.opt1 = nn::AdamState::for_size(c.q1.size(), lr);
  c.opt2 = nn::AdamState::for_size(c.q2.size(), lr);
  return c;
}

Mat CriticPair::inputs(const Mat& states, const Mat& actions, const Mat& skills) const {
  if (static_cast<std::size_t>(states.cols()) != state_dim || static_cast<std::size_t>(actions.cols()) != action_dim ||
      static_cast<std::size_t>(skills.cols()) != skill_dim) {
    throw ConfigError("critic batch has wrong state, action or skill width");
  }
  return concat_cols({&states, &actions, &skills});
}

Vec critic_values(const nn::ParamVector& critic, const Mat& inputs) {
  return nn::mlp_forward_batch(critic, inputs).output().col(0);
}

Vec critic_targets(const SacBatch& batch, const NextActionFn& next_action, const CriticPair& critics,
                   const LearnerConfig& cfg, Rng& rng) {
  const ActionBatch next = next_action(batch.next_states, batch.skills, rng);
  const Mat in = critics.inputs(batch.next_states, next.actions, batch.skills);
  const Vec t1 = critic_values(critics.target1, in);
  const Vec t2 = critic_values(critics.target2, in);
  Vec y(batch.size());
  for (Eigen::Index r = 0; r < y.size(); ++r) {
    const double soft_value = std::min(t1[r], t2[r]) - cfg.entropy_coef * next.log_probs[r];
    y[r] = batch.rewards[r] + cfg.gamma * (1.0 - batch.terminal[r]) * soft_value;
  }
  check_finite(y, "critic target");
  return y;
}

Vec critic_targets(const SacBatch& batch, const Actor& actor, const CriticPair& critics,
                   const LearnerConfig& cfg, Rng& rng) {
  const NextActionFn sampler = [&actor](const Mat& next_states, const Mat& skills, Rng& r) {
    const Mat noise = standard_normal_matrix(next_states.rows(), static_cast<Eigen::Index>(actor.action_dim()), r);
    return actor.sample_batch(next_states, skills, noise);
  };
  return critic_targets(batch, sampler, critics, cfg, rng);
}

LossGrad critic_loss(const nn::ParamVector& critic, const Mat& inputs, const Vec& targets) {
  const auto cache = nn::mlp_forward_batch(critic, inputs);
  const Vec err = cache.output().col(0) - targets;
  const double n = static_cast<double>(err.size());
  LossGrad out;
  out.loss = err.squaredNorm() / n;
  if (!std::isfinite(out.loss)) throw NumericError("critic loss is not finite");
  Mat d_out = (2.0 / n) * err;
  out.grad = nn::mlp_backward(critic, cache, d_out).params;
  return out;
}

CriticStats critic_update(CriticPair& critics, const SacBatch& batch, const Vec& targets) {
  const Mat in = critics.inputs(batch.states, batch.actions, batch.skills);
  const LossGrad g1 = critic_loss(critics.q1, in, targets);
  const LossGrad g2 = critic_loss(critics.q2, in, targets);
  nn::adam_step(critics.opt1, critics.q1, g1.grad);
  nn::adam_step(critics.opt2, critics.q2, g2.grad);
  return {g1.loss, g2.loss};
}

LossGrad actor_loss(const Actor& actor, const CriticPair& critics, const Mat& states, const Mat& skills,
                    const Mat& noise, double entropy_coef) {
  const auto cache = nn::mlp_forward_batch(actor.params(), actor.inputs(states, skills));
  const Mat& out = cache.output();
  const Eigen::Index n = out.rows();
  const auto d = static_cast<Eigen::Index>(actor.action_dim());
  if (noise.rows() != n || noise.cols() != d) throw ConfigError("noise batch has wrong shape");
  const double inv_n = 1.0 / static_cast<double>(n);

  Mat actions(n, d);
  Mat stddev(n, d);
  Vec log_probs(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    double lp = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      const double log_std = nn::clamp_log_std(out(r, d + i));
      stddev(r, i) = std::exp(log_std);
      const double a = std::tanh(out(r, i) + stddev(r, i) * noise(r, i));
      const double ac = nn::clamp_action(a);
      actions(r, i) = a;
      lp += -log_std - nn::kHalfLog2Pi - 0.5 * noise(r, i) * noise(r, i) - std::log(1.0 - ac * ac);
    }
    log_probs[r] = lp;
  }

  const Mat critic_in = critics.inputs(states, actions, skills);
  const auto c1 = nn::mlp_forward_batch(critics.q1, critic_in);
  const auto c2 = nn::mlp_forward_batch(critics.q2, critic_in);
  Mat d1 = Mat::Zero(n, 1);
  Mat d2 = Mat::Zero(n, 1);
  double loss = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const double q1 = c1.output()(r, 0);
    const double q2 = c2.output()(r, 0);
    // The loss subtracts min(Q1, Q2); gradient flows through the smaller critic.
    if (q1 <= q2) {
      d1(r, 0) = -inv_n;
    } else {
      d2(r, 0) = -inv_n;
    }
    loss += inv_n * (entropy_coef * log_probs[r] - std::min(q1, q2));
  }
  if (!std::isfinite(loss)) throw NumericError("actor loss is not finite");
  const Mat g_in1 = nn::mlp_backward(critics.q1, c1, d1, true).input;
  const Mat g_in2 = nn::mlp_backward(critics.q2, c2, d2, true).input;
  const auto a_col = static_cast<Eigen::Index>(critics.state_dim);
  const Mat d_actions = g_in1.middleCols(a_col, d) + g_in2.middleCols(a_col, d);

  Mat d_out(n, 2 * d);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index i = 0; i < d; ++i) {
      const double a = actions(r, i);
      const bool inside = std::abs(a) < 1.0 - nn::kTanhMargin;
      // d/du of -log(1 - tanh(u)^2) is 2 tanh(u).
      const double d_u = d_actions(r, i) * (1.0 - a * a) + (inside ? entropy_coef * inv_n * 2.0 * a : 0.0);
      const double raw = out(r, d + i);
      const bool log_std_free = raw > nn::kLogStdMin && raw < nn::kLogStdMax;
      d_out(r, i) = d_u;
      d_out(r, d + i) = log_std_free ? (-entropy_coef * inv_n + d_u * stddev(r, i) * noise(r, i)) : 0.0;
    }
  }
  LossGrad result;
  result.loss = loss;
  result.grad = nn::mlp_backward(actor.params(), cache, d_out).params;
  return result;
}

ActorStats actor_update(Actor& actor, nn::AdamState& opt, const CriticPair& critics, const SacBatch& batch,
                        const LearnerConfig& cfg, Rng& rng) {
  const Mat noise = standard_normal_matrix(batch.states.rows(), static_cast<Eigen::Index>(actor.action_dim()), rng);
  const LossGrad g = actor_loss(actor, critics, batch.states, batch.skills, noise, cfg.entropy_coef);
  nn::adam_step(opt, actor.params(), g.grad);
  return {g.loss};
}

void target_update(CriticPair& critics, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in (0, 1]");
  auto blend = [tau](const nn::ParamVector& online, nn::ParamVector& target) {
    auto t = target.values();
    const auto o = online.values();
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = tau * o[i] + (1.0 - tau) * t[i];
  };
  blend(critics.q1, critics.target1);
  blend(critics.q2, critics.target2);
}

}  // namespace mi_skills::sac
