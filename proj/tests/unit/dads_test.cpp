#include "mi_skills/autodiff.hpp"
#include "mi_skills/dads.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

using namespace mi_skills;
using dads::DynamicsModel;

namespace {

envs::State pm_state(double x, double y) {
  envs::State s{Vec::Zero(4), 0};
  s.x[0] = x;
  s.x[1] = y;
  return s;
}

std::vector<double> as_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

// Model whose only nonzero parameters are the output biases: the same Gaussian for every input.
DynamicsModel constant_model(const Vec& mean, const Vec& log_std, std::size_t skill_dim) {
  Rng rng = make_rng(0, 0);
  DynamicsModel m(static_cast<std::size_t>(mean.size()), skill_dim, 8, rng);
  for (auto& p : m.params().values()) p = 0.0;
  const std::size_t last = m.params().num_layers() - 1;
  m.params().bias(last) << mean, log_std;
  return m;
}

}  // namespace

TEST(Prior, BoundsAndMoments) {
  Rng rng = make_rng(1, 0);
  const int n = 100000;
  Vec sum = Vec::Zero(2);
  for (int i = 0; i < n; ++i) {
    const SkillVector z = dads::sample_prior(2, rng);
    ASSERT_EQ(z.dim(), 2u);
    ASSERT_LE(z.values().cwiseAbs().maxCoeff(), 1.0);
    sum += z.values();
  }
  const double se = std::sqrt(1.0 / 3.0 / n);
  EXPECT_LT(std::abs(sum[0] / n), 3.0 * se);
  EXPECT_LT(std::abs(sum[1] / n), 3.0 * se);
}

TEST(Prior, Reproducible) {
  Rng a = make_rng(2, 0), b = make_rng(2, 0);
  EXPECT_EQ(dads::sample_prior(2, a), dads::sample_prior(2, b));
}

TEST(SkillVector, RejectsOutOfRange) {
  Vec z(2);
  z << 0.5, 1.5;
  EXPECT_THROW(SkillVector{z}, ConfigError);
  z << 0.5, std::nan("");
  EXPECT_THROW(SkillVector{z}, ConfigError);
  z << -1.0, 1.0;
  EXPECT_NO_THROW(SkillVector{z});
}

TEST(DynamicsLogProb, UnitGaussianExamples) {
  const envs::PointMass2D env;
  const envs::State s = pm_state(0.0, 0.0), s_next = pm_state(0.03, -0.02);
  Vec mean(2);
  mean << 0.03, -0.02;
  const DynamicsModel m = constant_model(mean, Vec::Zero(2), 2);
  const SkillVector z(Vec::Zero(2));
  EXPECT_NEAR(dads::dynamics_log_prob(m, env, s, z, s_next), -1.8379, 1e-4);
  const DynamicsModel off = constant_model(mean + Vec::Ones(2), Vec::Zero(2), 2);
  EXPECT_NEAR(dads::dynamics_log_prob(off, env, s, z, s_next), -2.8379, 1e-4);
}

TEST(DynamicsLogProb, MatchesIndependentOracle) {
  const envs::PointMass2D env;
  Rng rng = make_rng(3, 0);
  std::uniform_real_distribution<double> pos(-2.0, 2.0), step(-0.05, 0.05);
  for (int i = 0; i < 100; ++i) {
    const DynamicsModel m(2, 2, 16, rng);
    const envs::State s = pm_state(pos(rng), pos(rng));
    const envs::State s_next = pm_state(s.x[0] + step(rng), s.x[1] + step(rng));
    const SkillVector z = dads::sample_prior(2, rng);
    const std::vector<double> in = {s.x[0], s.x[1], z[0], z[1]};
    const auto out = oracle::mlp_forward(m.params(), in);
    std::vector<double> sd(2);
    for (int k = 0; k < 2; ++k) sd[k] = std::exp(std::clamp(out[2 + k], -5.0, 2.0));
    const double want = oracle::gaussian_log_density({out[0], out[1]}, sd,
                                                     {s_next.x[0] - s.x[0], s_next.x[1] - s.x[1]});
    EXPECT_NEAR(dads::dynamics_log_prob(m, env, s, z, s_next), want, 1e-12);
  }
}

TEST(DynamicsLogProb, ValveUsesWrappedDelta) {
  const envs::Valve1D env;
  Vec mean(1);
  mean << 0.2;
  const DynamicsModel m = constant_model(mean, Vec::Zero(1), 1);
  envs::State s{Vec::Zero(2), 0}, s2{Vec::Zero(2), 0};
  s.x[0] = std::numbers::pi - 0.1;
  s2.x[0] = -std::numbers::pi + 0.1;
  EXPECT_NEAR(dads::dynamics_log_prob(m, env, s, SkillVector(Vec::Zero(1)), s2), -nn::kHalfLog2Pi, 1e-12);
}

TEST(Reward, LogTenExample) {
  // log q at z = log 0.2; 100 priors whose logsumexp is log 2.0.
  std::vector<double> priors(100, std::log(2.0 / 100.0));
  EXPECT_NEAR(dads::intrinsic_reward_from_log_probs(std::log(0.2), priors), std::log(10.0), 1e-12);
}

TEST(Reward, ExactlyZeroUnderConstantDensity) {
  const envs::PointMass2D env;
  Rng rng = make_rng(4, 0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    Vec mean(2), ls(2);
    mean << 0.05 * u(rng), 0.05 * u(rng);
    ls << u(rng), u(rng);
    const DynamicsModel m = constant_model(mean, ls, 2);
    const dads::RewardContext ctx(m, env, dads::sample_priors(100, 2, rng));
    const envs::State s = pm_state(u(rng), u(rng));
    const envs::State s2 = pm_state(s.x[0] + 0.01 * u(rng), s.x[1] + 0.01 * u(rng));
    EXPECT_EQ(dads::intrinsic_reward(ctx, s, dads::sample_prior(2, rng), s2), 0.0);
  }
}

TEST(Reward, ZeroWhenModelIgnoresSkill) {
  const envs::PointMass2D env;
  Rng rng = make_rng(5, 0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    DynamicsModel m(2, 2, 16, rng);
    auto w = m.params().weight(0);
    w.rightCols(2).setZero();
    const dads::RewardContext ctx(m, env, dads::sample_priors(100, 2, rng));
    const envs::State s = pm_state(u(rng), u(rng));
    const envs::State s2 = pm_state(s.x[0] + 0.01 * u(rng), s.x[1] + 0.01 * u(rng));
    EXPECT_NEAR(dads::intrinsic_reward(ctx, s, dads::sample_prior(2, rng), s2), 0.0, 1e-12);
  }
}

TEST(Reward, PermutationInvariant) {
  const envs::PointMass2D env;
  Rng rng = make_rng(6, 0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const DynamicsModel m(2, 2, 16, rng);
    auto priors = dads::sample_priors(100, 2, rng);
    const envs::State s = pm_state(u(rng), u(rng));
    const envs::State s2 = pm_state(s.x[0] + 0.05 * u(rng), s.x[1] + 0.05 * u(rng));
    const SkillVector z = dads::sample_prior(2, rng);
    const double a = dads::intrinsic_reward({m, env, priors}, s, z, s2);
    std::shuffle(priors.begin(), priors.end(), rng);
    EXPECT_NEAR(dads::intrinsic_reward({m, env, priors}, s, z, s2), a, 1e-12);
  }
}

TEST(Reward, MatchesDirectRatioOracle) {
  const envs::PointMass2D env;
  Rng rng = make_rng(7, 0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const DynamicsModel m(2, 2, 8, rng);
    const auto priors = dads::sample_priors(20, 2, rng);
    const envs::State s = pm_state(u(rng), u(rng));
    const envs::State s2 = pm_state(s.x[0] + 0.05 * u(rng), s.x[1] + 0.05 * u(rng));
    const SkillVector z = dads::sample_prior(2, rng);
    auto density = [&](const SkillVector& zz) {
      const auto out = oracle::mlp_forward(m.params(), {s.x[0], s.x[1], zz[0], zz[1]});
      std::vector<double> sd = {std::exp(std::clamp(out[2], -5.0, 2.0)), std::exp(std::clamp(out[3], -5.0, 2.0))};
      return oracle::gaussian_density({out[0], out[1]}, sd, {s2.x[0] - s.x[0], s2.x[1] - s.x[1]});
    };
    double mean_q = 0.0;
    for (const auto& zi : priors) mean_q += density(zi) / 20.0;
    const double want = std::log(density(z) / mean_q);
    EXPECT_NEAR(dads::intrinsic_reward({m, env, priors}, s, z, s2), want, 1e-9);
  }
}

TEST(Reward, AugmentedBound) {
  Rng rng = make_rng(8, 0);
  std::normal_distribution<double> n(0.0, 20.0);
  for (int i = 0; i < 1000; ++i) {
    const double lq = n(rng);
    std::vector<double> priors(100);
    for (auto& p : priors) p = n(rng);
    const double r = dads::intrinsic_reward_from_log_probs(lq, priors);
    std::vector<double> aug = priors;
    aug.push_back(lq);
    EXPECT_LE(lq - dads::log_sum_exp(aug), 0.0);
    EXPECT_LE(r, std::log(100.0) + lq - *std::max_element(priors.begin(), priors.end()) + 1e-12);
    EXPECT_TRUE(std::isfinite(r));
  }
}

TEST(Reward, ExtremeLogDensitiesStayFinite) {
  std::vector<double> priors = {-1e4, -2e4, -5e3};
  EXPECT_NEAR(dads::intrinsic_reward_from_log_probs(-1e4, priors), -1e4 + 5e3 + std::log(3.0), 1e-9);
  priors = {-std::numeric_limits<double>::infinity()};
  EXPECT_THROW(dads::intrinsic_reward_from_log_probs(0.0, priors), NumericError);
}

TEST(IsWeight, Examples) {
  EXPECT_EQ(dads::is_weight(-1.3, -1.3, 10.0), 1.0);
  EXPECT_EQ(dads::is_weight(3.0, 0.0, 10.0), 10.0);
  EXPECT_EQ(dads::is_weight(-3.0, 0.0, 10.0), 0.1);
  EXPECT_NEAR(dads::is_weight(1.0, 0.0, 10.0), std::exp(1.0), 1e-15);
  EXPECT_THROW(dads::is_weight(std::nan(""), 0.0, 10.0), NumericError);
  EXPECT_THROW(dads::is_weight(0.0, -std::numeric_limits<double>::infinity(), 10.0), NumericError);
  EXPECT_THROW(dads::is_weight(0.0, 0.0, 0.5), ConfigError);
}

TEST(IsWeight, AlwaysWithinClipRange) {
  Rng rng = make_rng(9, 0);
  std::normal_distribution<double> n(0.0, 50.0);
  std::uniform_real_distribution<double> a(1.0, 100.0);
  for (int i = 0; i < 100000; ++i) {
    const double alpha = a(rng);
    const double w = dads::is_weight(n(rng), n(rng), alpha);
    ASSERT_GE(w, 1.0 / alpha);
    ASSERT_LE(w, alpha);
    ASSERT_EQ(dads::is_weight(n(rng), n(rng), 1.0), 1.0);
  }
}

TEST(CumulativeWeights, ProductArithmetic) {
  const std::vector<double> cur = {std::log(2.0), std::log(0.5), 0.0};
  const std::vector<double> beh = {0.0, 0.0, 0.0};
  const auto w = dads::cumulative_ratio_weights(cur, beh);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_NEAR(w[0].weight, 2.0, 1e-15);
  EXPECT_NEAR(w[1].weight, 1.0, 1e-15);
  EXPECT_NEAR(w[2].weight, 1.0, 1e-15);
}

TEST(CumulativeWeights, SingleStepIsUnclippedRatio) {
  const std::vector<double> cur = {4.0}, beh = {1.0};
  EXPECT_NEAR(dads::cumulative_ratio_weights(cur, beh)[0].weight, std::exp(3.0), 1e-12);
}

TEST(CumulativeWeights, OverflowIsFlagged) {
  const std::vector<double> cur(5, 400.0), beh(5, 0.0);
  const auto w = dads::cumulative_ratio_weights(cur, beh);
  EXPECT_FALSE(w[0].overflow);
  EXPECT_TRUE(w[1].overflow);
  EXPECT_TRUE(std::isinf(w[4].weight));
}

TEST(CumulativeWeights, OnPolicyEpisodeIsExactlyOne) {
  const envs::PointMass2D env;
  Rng rng = make_rng(10, 0);
  const sac::Actor actor(4, 2, 2, 16, rng);
  const SkillVector z = dads::sample_prior(2, rng);
  std::vector<Transition> ep;
  envs::State s = env.reset(rng);
  for (int t = 0; t < 50; ++t) {
    const auto smp = actor.sample(s.x, z.values(), rng);
    const auto r = env.step(s, as_std(smp.action));
    ep.push_back({s, z, smp.action, r.next_state, actor.log_prob(s.x, z.values(), smp.action), r.done, false, 0, 0});
    s = r.next_state;
  }
  for (const auto& w : dads::unbiased_trajectory_weights(ep, actor)) {
    EXPECT_EQ(w.weight, 1.0);
    EXPECT_FALSE(w.overflow);
  }
}

namespace {

dads::DynamicsBatch random_batch(std::size_t dr, std::size_t dz, std::size_t n, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(-1.0, 1.0), w(0.0, 2.0);
  dads::DynamicsBatch b{Mat(n, dr + dz), Mat(n, dr), Vec(n)};
  for (Eigen::Index r = 0; r < b.inputs.rows(); ++r) {
    for (Eigen::Index c = 0; c < b.inputs.cols(); ++c) b.inputs(r, c) = u(rng);
    for (Eigen::Index c = 0; c < b.deltas.cols(); ++c) b.deltas(r, c) = 0.5 * g(rng);
    b.weights[r] = w(rng);
  }
  return b;
}

}  // namespace

TEST(DynamicsLoss, GradientMatchesFiniteDifferences) {
  Rng rng = make_rng(11, 0);
  const std::size_t dims[][3] = {{1, 1, 3}, {2, 2, 6}, {3, 2, 10}};
  for (const auto& d : dims) {
    for (int i = 0; i < 20; ++i) {
      DynamicsModel m(d[0], d[1], d[2], rng);
      // Random biases keep pre-activations away from the ReLU kink at exactly zero.
      std::normal_distribution<double> jitter(0.0, 0.3);
      for (auto& p : m.params().values()) p += jitter(rng);
      const auto batch = random_batch(d[0], d[1], 7, rng);
      const auto g = dads::dynamics_loss(m, batch);
      const std::vector<double> x0(m.params().values().begin(), m.params().values().end());
      auto f = [&](const std::vector<double>& x) {
        DynamicsModel mm(d[0], d[1], nn::ParamVector(m.params().shapes(), x));
        return dads::dynamics_loss(mm, batch).loss;
      };
      EXPECT_LT(oracle::max_relative_error(g.grad, oracle::finite_difference(f, x0)), 1e-4);
    }
  }
}

TEST(DynamicsLoss, IsNegativeWeightedMeanLogLikelihood) {
  Rng rng = make_rng(12, 0);
  DynamicsModel m(2, 2, 8, rng);
  const auto b = random_batch(2, 2, 9, rng);
  const Vec lp = m.log_prob_batch(b.inputs, b.deltas);
  EXPECT_NEAR(dads::dynamics_loss(m, b).loss, -(b.weights.array() * lp.array()).sum() / 9.0, 1e-12);
}

TEST(DynamicsUpdate, ZeroWeightsLeaveParametersUnchanged) {
  Rng rng = make_rng(13, 0);
  DynamicsModel m(2, 2, 8, rng);
  auto b = random_batch(2, 2, 16, rng);
  b.weights.setZero();
  const nn::ParamVector before = m.params();
  auto opt = nn::AdamState::for_size(m.params().size(), 3e-4);
  dads::dynamics_update(m, opt, b);
  EXPECT_EQ(m.params(), before);
}

TEST(DynamicsUpdate, UnitWeightsEqualUnweightedStep) {
  Rng rng = make_rng(14, 0);
  DynamicsModel a(2, 2, 8, rng);
  DynamicsModel b = a;
  auto batch = random_batch(2, 2, 16, rng);
  batch.weights.setOnes();
  auto oa = nn::AdamState::for_size(a.params().size(), 3e-4);
  auto ob = oa;
  dads::dynamics_update(a, oa, batch);

  // Unweighted maximum likelihood through the tape.
  const auto grad = nn::ad::grad(b.params(), [&](nn::ad::Tape& tape, std::span<const nn::ad::Var> p) {
    nn::ad::Var total = tape.constant(0.0);
    for (Eigen::Index r = 0; r < batch.inputs.rows(); ++r) {
      std::vector<nn::ad::Var> in;
      for (Eigen::Index c = 0; c < batch.inputs.cols(); ++c) in.push_back(tape.constant(batch.inputs(r, c)));
      const auto out = nn::ad::mlp_forward(p, b.params().shapes(), in);
      for (std::size_t k = 0; k < 2; ++k) {
        const nn::ad::Var z = (batch.deltas(r, static_cast<Eigen::Index>(k)) - out[k]) / exp(out[2 + k]);
        total = total + out[2 + k] + nn::kHalfLog2Pi + 0.5 * square(z);
      }
    }
    return total * (1.0 / static_cast<double>(batch.inputs.rows()));
  });
  nn::adam_step(ob, b.params(), grad);
  for (std::size_t i = 0; i < a.params().size(); ++i) EXPECT_NEAR(a.params()[i], b.params()[i], 1e-12);
}

TEST(DynamicsUpdate, SmallStepIncreasesLikelihood) {
  const envs::PointMass2D env;
  Rng rng = make_rng(15, 0);
  for (int i = 0; i < 20; ++i) {
    DynamicsModel m(2, 2, 32, rng);
    const sac::Actor actor(4, 2, 2, 32, rng);
    std::vector<Transition> rows;
    for (int e = 0; e < 4; ++e) {
      const SkillVector z = dads::sample_prior(2, rng);
      envs::State s = env.reset(rng);
      for (int t = 0; t < 16; ++t) {
        const auto smp = actor.sample(s.x, z.values(), rng);
        const auto r = env.step(s, as_std(smp.action));
        rows.push_back({s, z, smp.action, r.next_state, smp.log_prob, false, false, 0, e});
        s = r.next_state;
      }
    }
    const std::vector<double> w(rows.size(), 1.0);
    const auto batch = dads::make_dynamics_batch(env, rows, w);
    auto opt = nn::AdamState::for_size(m.params().size(), 1e-5);
    const double before = m.log_prob_batch(batch.inputs, batch.deltas).mean();
    dads::dynamics_update(m, opt, batch);
    EXPECT_GT(m.log_prob_batch(batch.inputs, batch.deltas).mean(), before);
  }
}

TEST(DynamicsUpdate, LinearSkillRegressionReachesAnalyticFit) {
  Rng rng = make_rng(16, 0);
  Mat A(2, 2);
  A << 0.8, -0.2, 0.4, 0.6;
  const double noise = 0.1;
  std::normal_distribution<double> g(0.0, noise);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto make = [&](std::size_t n) {
    dads::DynamicsBatch b{Mat(n, 4), Mat(n, 2), Vec::Ones(n)};
    for (Eigen::Index r = 0; r < b.inputs.rows(); ++r) {
      for (int c = 0; c < 4; ++c) b.inputs(r, c) = u(rng);
      const Vec z = b.inputs.row(r).tail(2).transpose();
      const Vec d = A * z;
      b.deltas(r, 0) = d[0] + g(rng);
      b.deltas(r, 1) = d[1] + g(rng);
    }
    return b;
  };
  const auto train = make(4096);
  const auto held = make(4096);

  // Closed-form least squares of delta on [z, 1] per output, residual variance as the fitted sigma^2.
  Mat X(train.inputs.rows(), 3);
  X << train.inputs.rightCols(2), Vec::Ones(train.inputs.rows());
  const Mat coef = (X.transpose() * X).ldlt().solve(X.transpose() * train.deltas);
  const Mat resid = train.deltas - X * coef;
  Mat Xh(held.inputs.rows(), 3);
  Xh << held.inputs.rightCols(2), Vec::Ones(held.inputs.rows());
  const Mat pred = Xh * coef;
  double analytic = 0.0;
  for (int k = 0; k < 2; ++k) {
    const double var = resid.col(k).squaredNorm() / static_cast<double>(resid.rows());
    for (Eigen::Index r = 0; r < held.deltas.rows(); ++r) {
      const double e = held.deltas(r, k) - pred(r, k);
      analytic += (-0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * e * e / var) / static_cast<double>(held.deltas.rows());
    }
  }

  DynamicsModel m(2, 2, 64, rng);
  auto opt = nn::AdamState::for_size(m.params().size(), 1e-3);
  std::uniform_int_distribution<Eigen::Index> pick(0, train.inputs.rows() - 1);
  for (int step = 0; step < 2000; ++step) {
    dads::DynamicsBatch mb{Mat(256, 4), Mat(256, 2), Vec::Ones(256)};
    for (Eigen::Index r = 0; r < 256; ++r) {
      const Eigen::Index j = pick(rng);
      mb.inputs.row(r) = train.inputs.row(j);
      mb.deltas.row(r) = train.deltas.row(j);
    }
    dads::dynamics_update(m, opt, mb);
  }
  const double fitted = m.log_prob_batch(held.inputs, held.deltas).mean();
  EXPECT_NEAR(fitted, analytic, 0.1);
}
