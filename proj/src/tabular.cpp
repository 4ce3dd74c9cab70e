#include "mi_skills/tabular.hpp"

#include <cmath>
#include <string>

namespace mi_skills::envs {

namespace {

constexpr double kRowTolerance = 1e-12;

void check_distribution(const double* p, std::size_t n, const std::string& what) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(p[i] >= 0.0)) throw ConfigError(what + " has a negative or NaN probability");
    total += p[i];
  }
  if (std::abs(total - 1.0) > kRowTolerance) {
    throw ConfigError(what + " sums to " + std::to_string(total) + ", not 1");
  }
}

std::vector<double> random_simplex_rows(std::size_t rows, std::size_t cols, Rng& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += out[r * cols + c] = u(rng);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= total;
  }
  return out;
}

}  // namespace

TabularMdp::TabularMdp(std::size_t n_states, std::size_t n_actions, int horizon, std::vector<double> initial,
                       std::vector<double> transition, std::vector<double> reward)
    : n_states_(n_states),
      n_actions_(n_actions),
      horizon_(horizon),
      initial_(std::move(initial)),
      transition_(std::move(transition)),
      reward_(std::move(reward)) {
  if (n_states_ == 0 || n_states_ > kTabularMaxStates) throw ConfigError("tabular MDP: 1..5 states");
  if (n_actions_ == 0 || n_actions_ > kTabularMaxActions) throw ConfigError("tabular MDP: 1..3 actions");
  if (horizon_ < 1 || horizon_ > kTabularMaxHorizon) throw ConfigError("tabular MDP: horizon 1..6");
  const std::size_t n = n_states_ * n_actions_ * n_states_;
  if (initial_.size() != n_states_ || transition_.size() != n || reward_.size() != n) {
    throw ConfigError("tabular MDP: table sizes do not match state/action counts");
  }
  check_distribution(initial_.data(), n_states_, "initial distribution");
  for (std::size_t s = 0; s < n_states_; ++s) {
    for (std::size_t a = 0; a < n_actions_; ++a) {
      check_distribution(&transition_[index(s, a, 0)], n_states_,
                         "transition row (" + std::to_string(s) + ", " + std::to_string(a) + ")");
    }
  }
}

TabularMdp random_tabular_mdp(std::size_t n_states, std::size_t n_actions, int horizon, Rng& rng) {
  auto initial = random_simplex_rows(1, n_states, rng);
  auto transition = random_simplex_rows(n_states * n_actions, n_states, rng);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> reward(n_states * n_actions * n_states);
  for (auto& r : reward) r = u(rng);
  return TabularMdp(n_states, n_actions, horizon, std::move(initial), std::move(transition), std::move(reward));
}

TabularPolicy random_tabular_policy(std::size_t n_states, std::size_t n_actions, Rng& rng) {
  return random_simplex_rows(n_states, n_actions, rng);
}

void validate_policy(const TabularMdp& mdp, const TabularPolicy& policy) {
  if (policy.size() != mdp.n_states() * mdp.n_actions()) throw ConfigError("policy table has wrong size");
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    check_distribution(&policy[s * mdp.n_actions()], mdp.n_actions(), "policy row " + std::to_string(s));
  }
}

std::vector<Trajectory> enumerate_trajectories(const TabularMdp& mdp, const TabularPolicy& policy) {
  validate_policy(mdp, policy);
  std::vector<Trajectory> out;
  Trajectory current;
  // Depth-first over (a_t, s_{t+1}) choices, pruning zero-probability branches.
  auto recurse = [&](auto&& self, double prob) -> void {
    if (static_cast<int>(current.actions.size()) == mdp.horizon()) {
      current.probability = prob;
      out.push_back(current);
      return;
    }
    const std::size_t s = current.states.back();
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
      const double pa = policy[s * mdp.n_actions() + a];
      if (pa == 0.0) continue;
      for (std::size_t s2 = 0; s2 < mdp.n_states(); ++s2) {
        const double ps = mdp.p(s, a, s2);
        if (ps == 0.0) continue;
        current.actions.push_back(a);
        current.states.push_back(s2);
        self(self, prob * pa * ps);
        current.actions.pop_back();
        current.states.pop_back();
      }
    }
  };
  for (std::size_t s0 = 0; s0 < mdp.n_states(); ++s0) {
    if (mdp.initial(s0) == 0.0) continue;
    current.states = {s0};
    current.actions.clear();
    recurse(recurse, mdp.initial(s0));
  }
  return out;
}

double discounted_return_by_enumeration(const TabularMdp& mdp, const TabularPolicy& policy, double gamma) {
  double total = 0.0;
  for (const auto& traj : enumerate_trajectories(mdp, policy)) {
    double ret = 0.0;
    double discount = 1.0;
    for (std::size_t t = 0; t < traj.actions.size(); ++t) {
      ret += discount * mdp.r(traj.states[t], traj.actions[t], traj.states[t + 1]);
      discount *= gamma;
    }
    total += traj.probability * ret;
  }
  return total;
}

std::vector<double> discounted_state_distribution(const TabularMdp& mdp, const TabularPolicy& policy,
                                                  double gamma) {
  validate_policy(mdp, policy);
  const std::size_t ns = mdp.n_states();
  const std::size_t na = mdp.n_actions();
  std::vector<double> marginal(ns);
  for (std::size_t s = 0; s < ns; ++s) marginal[s] = mdp.initial(s);
  std::vector<double> out(ns, 0.0);
  double discount = 1.0;
  for (int t = 0; t < mdp.horizon(); ++t) {
    for (std::size_t s = 0; s < ns; ++s) out[s] += discount * marginal[s];
    std::vector<double> next(ns, 0.0);
    for (std::size_t s = 0; s < ns; ++s) {
      for (std::size_t a = 0; a < na; ++a) {
        for (std::size_t s2 = 0; s2 < ns; ++s2) next[s2] += marginal[s] * policy[s * na + a] * mdp.p(s, a, s2);
      }
    }
    marginal = std::move(next);
    discount *= gamma;
  }
  return out;
}

double stationary_weighted_reward(const TabularMdp& mdp, const TabularPolicy& policy, double gamma) {
  const auto dist = discounted_state_distribution(mdp, policy, gamma);
  const std::size_t na = mdp.n_actions();
  double total = 0.0;
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    double expected = 0.0;
    for (std::size_t a = 0; a < na; ++a) {
      for (std::size_t s2 = 0; s2 < mdp.n_states(); ++s2) {
        expected += policy[s * na + a] * mdp.p(s, a, s2) * mdp.r(s, a, s2);
      }
    }
    total += dist[s] * expected;
  }
  return total;
}

}  // namespace mi_skills::envs
