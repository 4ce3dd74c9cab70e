#include "mi_skills/replay.hpp"

#include "episodes.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace mi_skills;
using replay::ReplayBuffer;

template <class T>
concept HasReward = requires(T t) { t.reward; };
static_assert(!HasReward<Transition>, "transitions must not carry rewards");

namespace {

// Episode of `len` rows whose episode_id and step index identify them uniquely.
std::vector<Transition> tagged_episode(std::int64_t id, int len) {
  std::vector<Transition> ep;
  for (int t = 0; t < len; ++t) {
    Transition tr;
    tr.s = {Vec::Constant(4, static_cast<double>(t)), t};
    tr.s_next = {Vec::Constant(4, static_cast<double>(t + 1)), t + 1};
    tr.z = SkillVector(Vec::Zero(2));
    tr.a = Vec::Zero(2);
    tr.logp_behavior = -1.0;
    tr.episode_id = id;
    tr.done = t + 1 == len;
    ep.push_back(tr);
  }
  return ep;
}

}  // namespace

TEST(ReplayBuffer, PreservesOrder) {
  ReplayBuffer buf(10);
  buf.add_episode(tagged_episode(0, 5));
  ASSERT_EQ(buf.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(buf.at(i).s.t, static_cast<int>(i));
}

TEST(ReplayBuffer, EvictsFifo) {
  ReplayBuffer buf(4);
  buf.add_episode(tagged_episode(0, 3));
  buf.add_episode(tagged_episode(1, 3));
  ASSERT_EQ(buf.size(), 4u);
  const std::pair<std::int64_t, int> want[] = {{0, 2}, {1, 0}, {1, 1}, {1, 2}};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(buf.at(i).episode_id, want[i].first);
    EXPECT_EQ(buf.at(i).s.t, want[i].second);
  }
  EXPECT_EQ(buf.sequence(0), 2u);
  EXPECT_EQ(buf.sequence(3), 5u);
}

TEST(ReplayBuffer, RetainsLastInsertionsForAnySequence) {
  Rng rng = make_rng(1, 0);
  std::uniform_int_distribution<int> len(1, 9), cap(1, 30);
  for (int trial = 0; trial < 100; ++trial) {
    ReplayBuffer buf(static_cast<std::size_t>(cap(rng)));
    std::vector<std::pair<std::int64_t, int>> all;
    for (std::int64_t e = 0; e < 12; ++e) {
      const auto ep = tagged_episode(e, len(rng));
      buf.add_episode(ep);
      for (const auto& t : ep) all.emplace_back(e, t.s.t);
      ASSERT_EQ(buf.total_inserted(), all.size());
      ASSERT_EQ(buf.size(), std::min(all.size(), buf.capacity()));
      const std::size_t first = all.size() - buf.size();
      for (std::size_t i = 0; i < buf.size(); ++i) {
        ASSERT_EQ(buf.at(i).episode_id, all[first + i].first);
        ASSERT_EQ(buf.at(i).s.t, all[first + i].second);
      }
    }
  }
}

TEST(ReplayBuffer, RejectsBadEpisodes) {
  ReplayBuffer buf(10);
  EXPECT_THROW(buf.add_episode({}), ConfigError);
  auto ep = tagged_episode(0, 3);
  ep[1].z = SkillVector(Vec::Ones(2));
  EXPECT_THROW(buf.add_episode(ep), ConfigError);
  ep = tagged_episode(0, 3);
  ep[2].policy_version = 4;
  EXPECT_THROW(buf.add_episode(ep), ConfigError);
  ep = tagged_episode(0, 3);
  ep[0].logp_behavior = std::nan("");
  EXPECT_THROW(buf.add_episode(ep), NumericError);
  EXPECT_EQ(buf.size(), 0u);
  EXPECT_THROW(ReplayBuffer(0), ConfigError);
}

TEST(ReplayBuffer, SamplingErrorsAndSingleton) {
  ReplayBuffer buf(5);
  Rng rng = make_rng(2, 0);
  EXPECT_THROW(buf.sample_uniform(3, rng), ConfigError);
  buf.add_episode(tagged_episode(7, 1));
  for (const auto& t : buf.sample_uniform(50, rng)) EXPECT_EQ(t.episode_id, 7);
}

TEST(ReplayBuffer, SamplingIsUniform) {
  ReplayBuffer buf(10);
  buf.add_episode(tagged_episode(0, 10));
  Rng rng = make_rng(3, 0);
  std::vector<int> counts(10, 0);
  for (std::size_t i : buf.sample_indices(100000, rng)) ++counts[i];
  const double expected = 1e4, sd = std::sqrt(100000 * 0.1 * 0.9);
  double chi2 = 0.0;
  for (int c : counts) {
    EXPECT_LT(std::abs(c - expected), 5.0 * sd);
    chi2 += (c - expected) * (c - expected) / expected;
  }
  EXPECT_LT(chi2, 27.88);  // 0.999 quantile at 9 degrees of freedom
}

TEST(ReplayBuffer, SamplingIsReproducible) {
  ReplayBuffer buf(100);
  buf.add_episode(tagged_episode(0, 60));
  Rng a = make_rng(4, 0), b = make_rng(4, 0);
  EXPECT_EQ(buf.sample_indices(256, a), buf.sample_indices(256, b));
}

TEST(Relabel, BitwiseEqualToDirectCalls) {
  const envs::PointMass2D env;
  Rng rng = make_rng(5, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const dads::DynamicsModel model(2, 2, 16, rng);
    const dads::RewardContext ctx(model, env, dads::sample_priors(100, 2, rng));
    auto rows = fixture::random_point_mass_rows(64, rng);
    rows.push_back(rows[3]);
    const Vec r = replay::relabel(rows, ctx);
    for (std::size_t j = 0; j < rows.size(); ++j) {
      EXPECT_EQ(r[static_cast<Eigen::Index>(j)], dads::intrinsic_reward(ctx, rows[j].s, rows[j].z, rows[j].s_next));
    }
    EXPECT_EQ(r[64], r[3]);
    EXPECT_EQ(replay::relabel(rows, ctx), r);
    const Vec one = replay::relabel(std::span<const Transition>(rows.data(), 1), ctx);
    EXPECT_EQ(one[0], r[0]);
  }
}

TEST(WeightBatch, OnPolicyRowsWeighOne) {
  const envs::PointMass2D env;
  Rng rng = make_rng(6, 0);
  const sac::Actor actor(4, 2, 2, 32, rng);
  std::vector<Transition> rows;
  for (int e = 0; e < 5; ++e) {
    const auto ep = fixture::rollout(env, actor, dads::sample_prior(2, rng), rng, 0, e);
    rows.insert(rows.end(), ep.begin(), ep.end());
  }
  const Vec w = replay::weight_batch(rows, actor, 10.0);
  EXPECT_LT((w.array() - 1.0).abs().maxCoeff(), 1e-9);
}

TEST(WeightBatch, ClipBoundsAndAlphaOne) {
  Rng rng = make_rng(7, 0);
  const sac::Actor actor(4, 2, 2, 32, rng);
  const auto rows = fixture::random_point_mass_rows(500, rng);
  const Vec w1 = replay::weight_batch(rows, actor, 1.0);
  EXPECT_TRUE((w1.array() == 1.0).all());
  const Vec w10 = replay::weight_batch(rows, actor, 10.0);
  EXPECT_GE(w10.minCoeff(), 0.1);
  EXPECT_LE(w10.maxCoeff(), 10.0);
  EXPECT_GT(w10.maxCoeff() - w10.minCoeff(), 0.0);
}

TEST(ToSacBatch, CopiesRowsAndTerminalFlags) {
  auto ep = tagged_episode(0, 3);
  ep[2].terminal = true;
  Vec r(3);
  r << 0.5, -1.0, 2.0;
  const auto b = replay::to_sac_batch(ep, r);
  EXPECT_EQ(b.size(), 3u);
  EXPECT_EQ(b.rewards, r);
  EXPECT_EQ(b.terminal[0], 0.0);
  EXPECT_EQ(b.terminal[2], 1.0);
  EXPECT_EQ(b.next_states(1, 0), 2.0);
  EXPECT_THROW(replay::to_sac_batch(ep, Vec::Zero(2)), ConfigError);
}

TEST(Dump, RoundTripsExactly) {
  Rng rng = make_rng(8, 0);
  auto rows = fixture::random_point_mass_rows(40, rng);
  rows[5].done = true;
  rows[6].terminal = true;
  rows[7].policy_version = 123456789012;
  rows[8].episode_id = 42;
  std::stringstream ss;
  replay::write_dump(ss, {4, 2, 2}, rows);
  replay::DumpHeader h;
  const auto back = replay::read_dump(ss, &h);
  EXPECT_EQ(h.state_dim, 4u);
  EXPECT_EQ(h.skill_dim, 2u);
  EXPECT_EQ(h.action_dim, 2u);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].s.x, rows[i].s.x);
    EXPECT_EQ(back[i].s_next.x, rows[i].s_next.x);
    EXPECT_EQ(back[i].z, rows[i].z);
    EXPECT_EQ(back[i].a, rows[i].a);
    EXPECT_EQ(back[i].logp_behavior, rows[i].logp_behavior);
    EXPECT_EQ(back[i].done, rows[i].done);
    EXPECT_EQ(back[i].terminal, rows[i].terminal);
    EXPECT_EQ(back[i].policy_version, rows[i].policy_version);
    EXPECT_EQ(back[i].episode_id, rows[i].episode_id);
  }
}

TEST(Dump, RejectsMissingLogProbAndBadMagic) {
  Rng rng = make_rng(9, 0);
  auto rows = fixture::random_point_mass_rows(3, rng);
  rows[1].logp_behavior = std::nan("");
  std::stringstream ss;
  replay::write_dump(ss, {4, 2, 2}, rows);
  try {
    replay::read_dump(ss);
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("behavior log-probability"), std::string::npos);
  }
  std::stringstream junk("NOTADUMP........");
  EXPECT_THROW(replay::read_dump(junk), std::runtime_error);
}
