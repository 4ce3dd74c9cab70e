#pragma once

#include "mi_skills/core.hpp"

#include <cstddef>
#include <vector>

// Small enumerable MDPs for checking discounted-return identities exactly.
namespace mi_skills::envs {

inline constexpr std::size_t kTabularMaxStates = 5;
inline constexpr std::size_t kTabularMaxActions = 3;
inline constexpr int kTabularMaxHorizon = 6;

class TabularMdp {
 public:
  // transition and reward are indexed [s][a][s'] flattened; initial is over states.
  TabularMdp(std::size_t n_states, std::size_t n_actions, int horizon, std::vector<double> initial,
             std::vector<double> transition, std::vector<double> reward);

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  int horizon() const { return horizon_; }
  double initial(std::size_t s) const { return initial_[s]; }
  double p(std::size_t s, std::size_t a, std::size_t s2) const { return transition_[index(s, a, s2)]; }
  double r(std::size_t s, std::size_t a, std::size_t s2) const { return reward_[index(s, a, s2)]; }

 private:
  std::size_t index(std::size_t s, std::size_t a, std::size_t s2) const {
    return (s * n_actions_ + a) * n_states_ + s2;
  }
  std::size_t n_states_;
  std::size_t n_actions_;
  int horizon_;
  std::vector<double> initial_;
  std::vector<double> transition_;
  std::vector<double> reward_;
};

// pi(a | s), flattened [s][a]; rows must sum to 1.
using TabularPolicy = std::vector<double>;

TabularMdp random_tabular_mdp(std::size_t n_states, std::size_t n_actions, int horizon, Rng& rng);
TabularPolicy random_tabular_policy(std::size_t n_states, std::size_t n_actions, Rng& rng);
void validate_policy(const TabularMdp& mdp, const TabularPolicy& policy);

struct Trajectory {
  std::vector<std::size_t> states;   // horizon + 1 entries
  std::vector<std::size_t> actions;  // horizon entries
  double probability = 0.0;
};

// Every trajectory of full horizon with non-zero probability.
std::vector<Trajectory> enumerate_trajectories(const TabularMdp& mdp, const TabularPolicy& policy);

// E[sum_{t<T} gamma^t r(s_t, a_t, s_{t+1})] by summing over all trajectories.
double discounted_return_by_enumeration(const TabularMdp& mdp, const TabularPolicy& policy, double gamma);

// p(s) = sum_{t<T} gamma^t P(s_t = s), propagated forward through state marginals.
std::vector<double> discounted_state_distribution(const TabularMdp& mdp, const TabularPolicy& policy,
                                                  double gamma);

// sum_s p(s) E[r | s] under the discounted state distribution.
double stationary_weighted_reward(const TabularMdp& mdp, const TabularPolicy& policy, double gamma);

}  // namespace mi_skills::envs
