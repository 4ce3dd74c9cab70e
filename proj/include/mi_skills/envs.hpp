#pragma once

#include "mi_skills/core.hpp"

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mi_skills::envs {

struct EnvSpec {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::size_t reduced_dim = 0;
  int horizon = 1;
  // Per reduced coordinate: true if it is an angle kept in (-pi, pi].
  std::vector<bool> wraps;
};

struct State {
  Vec x;
  int t = 0;  // steps taken since reset
};

struct StepResult {
  State next_state;
  bool done = false;        // episode over: horizon reached or terminated
  bool terminated = false;  // premature (absorbing) termination
  int step_index = 0;
};

// Maps any real angle into (-pi, pi].
double wrap_angle(double x);

// Signed minimal difference b - a for angles, in (-pi, pi].
double angle_difference(double a, double b);

using TerminationPredicate = std::function<bool(const State&)>;

class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual const EnvSpec& spec() const = 0;
  virtual State reset(Rng& rng) const = 0;
  // Actions outside [-1, 1] are clipped with a warning.
  virtual StepResult step(const State& s, std::span<const double> action) const = 0;
  virtual Vec reduce(const State& s) const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;

  // reduce(s') - reduce(s), with minimal angular differences on wrapped coordinates.
  Vec reduced_delta(const State& s, const State& s_next) const;
  // Re-wraps flagged coordinates of a reduced point.
  Vec wrap_reduced(Vec r) const;

  void set_termination(TerminationPredicate predicate) { terminate_ = std::move(predicate); }
  std::size_t clipped_action_count() const { return clipped_; }

 protected:
  Vec clip_action(std::span<const double> action) const;
  bool should_terminate(const State& s) const { return terminate_ && terminate_(s); }

 private:
  TerminationPredicate terminate_;
  mutable std::size_t clipped_ = 0;
};

struct PointMassParams {
  double arena_half_width = 2.0;
  double reset_half_width = 0.1;
  double step_size = 0.05;  // displacement per unit action per step
  int horizon = 50;
};

// Planar point robot. State (x, y, previous action x, previous action y); reduced (x, y).
class PointMass2D final : public Environment {
 public:
  explicit PointMass2D(PointMassParams params = {});

  std::string name() const override { return "point_mass"; }
  const EnvSpec& spec() const override { return spec_; }
  State reset(Rng& rng) const override;
  StepResult step(const State& s, std::span<const double> action) const override;
  Vec reduce(const State& s) const override;
  std::unique_ptr<Environment> clone() const override;

  const PointMassParams& params() const { return params_; }

 private:
  PointMassParams params_;
  EnvSpec spec_;
};

struct ValveParams {
  double step_size = 0.1;  // radians per unit action per step
  int horizon = 50;
};

// Rotating valve. State (theta, previous action); reduced (theta), wrapped into (-pi, pi].
class Valve1D final : public Environment {
 public:
  explicit Valve1D(ValveParams params = {});

  std::string name() const override { return "valve"; }
  const EnvSpec& spec() const override { return spec_; }
  State reset(Rng& rng) const override;
  StepResult step(const State& s, std::span<const double> action) const override;
  Vec reduce(const State& s) const override;
  std::unique_ptr<Environment> clone() const override;

  const ValveParams& params() const { return params_; }

 private:
  ValveParams params_;
  EnvSpec spec_;
};

struct EnvConfig {
  std::string kind = "point_mass";
  int horizon = 50;
  double step_size = 0.05;
  double arena_half_width = 2.0;
  double reset_half_width = 0.1;
  // PointMass2D only: terminate when the robot leaves this radius; 0 disables.
  double terminate_radius = 0.0;
};

std::unique_ptr<Environment> make_environment(const EnvConfig& cfg);

}  // namespace mi_skills::envs
