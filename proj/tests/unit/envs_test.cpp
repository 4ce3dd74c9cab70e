#include "mi_skills/envs.hpp"
#include "mi_skills/tabular.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace mi_skills;
using envs::PointMass2D;
using envs::State;
using envs::Valve1D;

namespace {

constexpr double kPi = std::numbers::pi;

State pm_state(double x, double y) {
  State s{Vec::Zero(4), 0};
  s.x[0] = x;
  s.x[1] = y;
  return s;
}

State valve_state(double theta) {
  State s{Vec::Zero(2), 0};
  s.x[0] = theta;
  return s;
}

std::vector<double> act(std::initializer_list<double> a) { return a; }

}  // namespace

TEST(PointMass, ResetWithZeroHalfWidthIsOrigin) {
  PointMass2D env({2.0, 0.0, 0.05, 50});
  Rng rng = make_rng(1, 0);
  const State s = env.reset(rng);
  EXPECT_EQ(s.x[0], 0.0);
  EXPECT_EQ(s.x[1], 0.0);
  EXPECT_EQ(s.t, 0);
}

TEST(PointMass, ResetIsDeterministicAndInsideBox) {
  PointMass2D env;
  Rng a = make_rng(2, 0), b = make_rng(2, 0);
  for (int i = 0; i < 100; ++i) {
    const State sa = env.reset(a), sb = env.reset(b);
    EXPECT_EQ(sa.x, sb.x);
    EXPECT_LE(sa.x.head(2).cwiseAbs().maxCoeff(), 0.1);
    EXPECT_EQ(sa.x.tail(2).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(PointMass, ZeroActionKeepsPosition) {
  PointMass2D env;
  const auto a = act({0.0, 0.0});
  const auto r = env.step(pm_state(0.3, -0.7), a);
  EXPECT_EQ(r.next_state.x[0], 0.3);
  EXPECT_EQ(r.next_state.x[1], -0.7);
}

TEST(PointMass, StepMovesByStepSizeAndRecordsAction) {
  PointMass2D env;
  const auto a = act({1.0, -0.5});
  const auto r = env.step(pm_state(0.0, 0.0), a);
  EXPECT_DOUBLE_EQ(r.next_state.x[0], 0.05);
  EXPECT_DOUBLE_EQ(r.next_state.x[1], -0.025);
  EXPECT_EQ(r.next_state.x[2], 1.0);
  EXPECT_EQ(r.next_state.x[3], -0.5);
  EXPECT_EQ(r.step_index, 1);
}

TEST(PointMass, CornerClipsOutwardMotion) {
  PointMass2D env;
  const auto a = act({1.0, -1.0});
  const auto r = env.step(pm_state(2.0, -2.0), a);
  EXPECT_EQ(r.next_state.x[0], 2.0);
  EXPECT_EQ(r.next_state.x[1], -2.0);
}

TEST(PointMass, OutOfBoundsActionIsClipped) {
  PointMass2D env;
  const auto a = act({5.0, -0.2});
  const auto r = env.step(pm_state(0.0, 0.0), a);
  EXPECT_DOUBLE_EQ(r.next_state.x[0], 0.05);
  EXPECT_EQ(env.clipped_action_count(), 1u);
}

TEST(PointMass, NonFiniteActionIsRejected) {
  PointMass2D env;
  const auto a = act({std::nan(""), 0.0});
  EXPECT_THROW(env.step(pm_state(0.0, 0.0), a), NumericError);
}

TEST(PointMass, ReduceProjectsPosition) {
  PointMass2D env;
  State s = pm_state(1.5, -0.2);
  s.x[2] = 0.9;
  const Vec r = env.reduce(s);
  ASSERT_EQ(r.size(), 2);
  EXPECT_EQ(r[0], 1.5);
  EXPECT_EQ(r[1], -0.2);
  s.x[3] = -0.4;
  EXPECT_EQ(env.reduce(s), r);
}

TEST(PointMass, PerStepDisplacementBound) {
  PointMass2D env;
  Rng rng = make_rng(3, 0);
  std::uniform_real_distribution<double> u(-1.0, 1.0), pos(-2.0, 2.0);
  for (int i = 0; i < 10000; ++i) {
    const State s = pm_state(pos(rng), pos(rng));
    const auto a = act({u(rng), u(rng)});
    const auto r = env.step(s, a);
    EXPECT_LE(env.reduced_delta(s, r.next_state).norm(), 0.05 * std::sqrt(2.0) + 1e-15);
  }
}

TEST(PointMass, EpisodesEndAtHorizon) {
  PointMass2D env({2.0, 0.1, 0.05, 7});
  Rng rng = make_rng(4, 0);
  State s = env.reset(rng);
  int steps = 0;
  for (;;) {
    const auto r = env.step(s, act({0.3, 0.3}));
    ++steps;
    if (r.done) {
      EXPECT_FALSE(r.terminated);
      break;
    }
    s = r.next_state;
  }
  EXPECT_EQ(steps, 7);
}

TEST(PointMass, TerminationPredicateEndsEarly) {
  auto env = envs::make_environment({"point_mass", 50, 0.05, 2.0, 0.0, 0.12});
  State s = pm_state(0.0, 0.0);
  const auto a = act({1.0, 0.0});
  auto r = env->step(s, a);
  EXPECT_FALSE(r.done);
  r = env->step(r.next_state, a);
  EXPECT_FALSE(r.done);
  r = env->step(r.next_state, a);
  EXPECT_TRUE(r.done);
  EXPECT_TRUE(r.terminated);
}

TEST(PointMass, DeterministicTrajectories) {
  PointMass2D env;
  Rng a = make_rng(5, 0), b = make_rng(5, 0), acts = make_rng(6, 0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<std::vector<double>> actions(50, std::vector<double>(2));
  for (auto& v : actions) v = {u(acts), u(acts)};
  State sa = env.reset(a), sb = env.reset(b);
  for (const auto& v : actions) {
    sa = env.step(sa, v).next_state;
    sb = env.step(sb, v).next_state;
    ASSERT_EQ(sa.x, sb.x);
  }
}

TEST(Wrap, MapsIntoHalfOpenInterval) {
  EXPECT_EQ(envs::wrap_angle(kPi), kPi);
  EXPECT_NEAR(envs::wrap_angle(-kPi), kPi, 1e-15);
  EXPECT_NEAR(envs::wrap_angle(3.0 * kPi), kPi, 1e-12);
  EXPECT_NEAR(envs::wrap_angle(0.5 + 4.0 * kPi), 0.5, 1e-12);
  Rng rng = make_rng(7, 0);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  for (int i = 0; i < 100000; ++i) {
    const double w = envs::wrap_angle(u(rng));
    ASSERT_GT(w, -kPi);
    ASSERT_LE(w, kPi);
    ASSERT_EQ(envs::wrap_angle(w), w);
  }
}

TEST(Valve, ResetIsUniformOverCircle) {
  Valve1D env;
  Rng rng = make_rng(8, 0);
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double th = env.reset(rng).x[0];
    ASSERT_GT(th, -kPi);
    ASSERT_LE(th, kPi);
    sum += th;
  }
  const double se = kPi / std::sqrt(3.0) / std::sqrt(static_cast<double>(n));
  EXPECT_LT(std::abs(sum / n), 3.0 * se);
}

TEST(Valve, StepWrapsPastPi) {
  Valve1D env({0.3, 50});
  const auto a = act({1.0});
  const auto r = env.step(valve_state(kPi - 0.1), a);
  EXPECT_NEAR(r.next_state.x[0], -kPi + 0.2, 1e-12);
  EXPECT_EQ(r.next_state.x[1], 1.0);
}

TEST(Valve, ReduceAndMinimalDelta) {
  Valve1D env;
  EXPECT_EQ(env.reduce(valve_state(0.7))[0], 0.7);
  const Vec d = env.reduced_delta(valve_state(kPi - 0.1), valve_state(-kPi + 0.1));
  EXPECT_NEAR(d[0], 0.2, 1e-12);
  EXPECT_EQ(env.reduced_delta(valve_state(0.4), valve_state(0.4))[0], 0.0);
}

TEST(ReducedDelta, RoundTripsThroughWrap) {
  Valve1D valve;
  PointMass2D pm;
  Rng rng = make_rng(9, 0);
  std::uniform_real_distribution<double> ang(-kPi, kPi), pos(-2.0, 2.0);
  for (int i = 0; i < 10000; ++i) {
    const State a = valve_state(envs::wrap_angle(ang(rng))), b = valve_state(envs::wrap_angle(ang(rng)));
    const Vec back = valve.wrap_reduced(valve.reduce(a) + valve.reduced_delta(a, b));
    EXPECT_NEAR(envs::angle_difference(back[0], valve.reduce(b)[0]), 0.0, 1e-12);
    const State p = pm_state(pos(rng), pos(rng)), q = pm_state(pos(rng), pos(rng));
    EXPECT_LT((pm.reduce(p) + pm.reduced_delta(p, q) - pm.reduce(q)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(MakeEnvironment, UnknownKindIsConfigError) {
  envs::EnvConfig cfg;
  cfg.kind = "cartpole";
  EXPECT_THROW(envs::make_environment(cfg), ConfigError);
}
