#pragma once

#include "mi_skills/dads.hpp"
#include "mi_skills/sac.hpp"
#include "mi_skills/transition.hpp"

#include <vector>

namespace fixture {

using namespace mi_skills;

// One on-policy episode: actions drawn from `actor`, behavior log-probability recorded at collection time.
inline std::vector<Transition> rollout(const envs::Environment& env, const sac::Actor& actor, const SkillVector& z,
                                       Rng& rng, std::int64_t version = 0, std::int64_t episode_id = 0,
                                       int max_steps = 1 << 30) {
  std::vector<Transition> ep;
  envs::State s = env.reset(rng);
  for (int t = 0; t < max_steps; ++t) {
    const auto smp = actor.sample(s.x, z.values(), rng);
    const std::vector<double> a(smp.action.data(), smp.action.data() + smp.action.size());
    const auto r = env.step(s, a);
    ep.push_back({s, z, smp.action, r.next_state, actor.log_prob(s.x, z.values(), smp.action), r.done, r.terminated,
                  version, episode_id});
    if (r.done) break;
    s = r.next_state;
  }
  return ep;
}

// Transitions with arbitrary (s, z, a, s') inside the point-mass arena and a random behavior log-probability.
inline std::vector<Transition> random_point_mass_rows(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> pos(-2.0, 2.0), step(-0.05, 0.05), u(-1.0, 1.0), lp(-5.0, 2.0);
  std::vector<Transition> rows;
  for (std::size_t i = 0; i < n; ++i) {
    Transition t;
    t.s.x = Vec::Zero(4);
    t.s.x[0] = pos(rng);
    t.s.x[1] = pos(rng);
    t.s_next.x = t.s.x;
    t.s_next.x[0] += step(rng);
    t.s_next.x[1] += step(rng);
    t.a = Vec(2);
    t.a << 0.9 * u(rng), 0.9 * u(rng);
    t.s_next.x.tail(2) = t.a;
    t.z = dads::sample_prior(2, rng);
    t.logp_behavior = lp(rng);
    rows.push_back(std::move(t));
  }
  return rows;
}

}  // namespace fixture
