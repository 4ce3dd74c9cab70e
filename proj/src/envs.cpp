#include "mi_skills/envs.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>

namespace mi_skills::envs {

double wrap_angle(double x) {
  constexpr double pi = std::numbers::pi;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  if (x > -pi && x <= pi) return x;
  double y = x - two_pi * std::ceil((x - pi) / two_pi);
  // Rounding can land one ulp outside the interval.
  if (y <= -pi) y += two_pi;
  if (y > pi) y -= two_pi;
  return y;
}

double angle_difference(double a, double b) { return wrap_angle(b - a); }

Vec Environment::reduced_delta(const State& s, const State& s_next) const {
  const Vec r0 = reduce(s);
  const Vec r1 = reduce(s_next);
  Vec d = r1 - r0;
  const auto& wraps = spec().wraps;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (wraps[static_cast<std::size_t>(i)]) d[i] = angle_difference(r0[i], r1[i]);
  }
  return d;
}

Vec Environment::wrap_reduced(Vec r) const {
  const auto& wraps = spec().wraps;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (wraps[static_cast<std::size_t>(i)]) r[i] = wrap_angle(r[i]);
  }
  return r;
}

Vec Environment::clip_action(std::span<const double> action) const {
  if (action.size() != spec().action_dim) {
    throw ConfigError(name() + ": action has " + std::to_string(action.size()) + " dims, expected " +
                      std::to_string(spec().action_dim));
  }
  Vec a(static_cast<Eigen::Index>(action.size()));
  bool clipped = false;
  for (std::size_t i = 0; i < action.size(); ++i) {
    if (!std::isfinite(action[i])) throw NumericError(name() + ": non-finite action");
    a[static_cast<Eigen::Index>(i)] = std::clamp(action[i], -1.0, 1.0);
    clipped = clipped || a[static_cast<Eigen::Index>(i)] != action[i];
  }
  if (clipped) {
    if (clipped_ == 0) std::cerr << "warning: " << name() << ": action outside [-1, 1] clipped\n";
    ++clipped_;
  }
  return a;
}

PointMass2D::PointMass2D(PointMassParams params) : params_(params) {
  if (params_.horizon < 1) throw ConfigError("point_mass: horizon must be >= 1");
  if (!(params_.arena_half_width > 0.0)) throw ConfigError("point_mass: arena half-width must be > 0");
  if (params_.reset_half_width < 0.0 || params_.reset_half_width > params_.arena_half_width) {
    throw ConfigError("point_mass: reset half-width must lie in [0, arena half-width]");
  }
  if (!(params_.step_size > 0.0)) throw ConfigError("point_mass: step size must be > 0");
  spec_ = EnvSpec{4, 2, 2, params_.horizon, {false, false}};
}

State PointMass2D::reset(Rng& rng) const {
  State s{Vec::Zero(4), 0};
  const double hw = params_.reset_half_width;
  if (hw > 0.0) {
    std::uniform_real_distribution<double> u(-hw, hw);
    s.x[0] = u(rng);
    s.x[1] = u(rng);
  }
  return s;
}

StepResult PointMass2D::step(const State& s, std::span<const double> action) const {
  const Vec a = clip_action(action);
  const double lim = params_.arena_half_width;
  StepResult r;
  r.next_state.x = Vec(4);
  r.next_state.x[0] = std::clamp(s.x[0] + params_.step_size * a[0], -lim, lim);
  r.next_state.x[1] = std::clamp(s.x[1] + params_.step_size * a[1], -lim, lim);
  r.next_state.x[2] = a[0];
  r.next_state.x[3] = a[1];
  r.next_state.t = s.t + 1;
  r.step_index = r.next_state.t;
  r.terminated = should_terminate(r.next_state);
  r.done = r.terminated || r.step_index >= params_.horizon;
  return r;
}

Vec PointMass2D::reduce(const State& s) const { return s.x.head(2); }

std::unique_ptr<Environment> PointMass2D::clone() const { return std::make_unique<PointMass2D>(*this); }

Valve1D::Valve1D(ValveParams params) : params_(params) {
  if (params_.horizon < 1) throw ConfigError("valve: horizon must be >= 1");
  if (!(params_.step_size > 0.0)) throw ConfigError("valve: step size must be > 0");
  spec_ = EnvSpec{2, 1, 1, params_.horizon, {true}};
}

State Valve1D::reset(Rng& rng) const {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  State s{Vec::Zero(2), 0};
  // u in [0, 1) maps onto (-pi, pi].
  s.x[0] = std::numbers::pi - 2.0 * std::numbers::pi * u(rng);
  return s;
}

StepResult Valve1D::step(const State& s, std::span<const double> action) const {
  const Vec a = clip_action(action);
  StepResult r;
  r.next_state.x = Vec(2);
  r.next_state.x[0] = wrap_angle(s.x[0] + params_.step_size * a[0]);
  r.next_state.x[1] = a[0];
  r.next_state.t = s.t + 1;
  r.step_index = r.next_state.t;
  r.terminated = should_terminate(r.next_state);
  r.done = r.terminated || r.step_index >= params_.horizon;
  return r;
}

Vec Valve1D::reduce(const State& s) const { return s.x.head(1); }

std::unique_ptr<Environment> Valve1D::clone() const { return std::make_unique<Valve1D>(*this); }

std::unique_ptr<Environment> make_environment(const EnvConfig& cfg) {
  if (cfg.kind == "point_mass") {
    auto env = std::make_unique<PointMass2D>(
        PointMassParams{cfg.arena_half_width, cfg.reset_half_width, cfg.step_size, cfg.horizon});
    if (cfg.terminate_radius > 0.0) {
      const double radius = cfg.terminate_radius;
      env->set_termination([radius](const State& s) { return s.x.head(2).norm() > radius; });
    }
    return env;
  }
  if (cfg.kind == "valve") return std::make_unique<Valve1D>(ValveParams{cfg.step_size, cfg.horizon});
  throw ConfigError("unknown environment '" + cfg.kind + "'");
}

}  // namespace mi_skills::envs
