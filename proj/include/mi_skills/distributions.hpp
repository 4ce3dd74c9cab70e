#pragma once

#include "mi_skills/core.hpp"

namespace mi_skills::nn {

// Heads emit log-stddev; it is clamped to this range before exponentiation.
inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
// Squashed actions are kept this far inside (-1, 1) before the Jacobian log term.
inline constexpr double kTanhMargin = 1e-6;

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

struct DiagGaussian {
  Vec mean;
  Vec stddev;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
  // Throws ConfigError if the dimensions disagree or any stddev is not strictly positive.
  void validate() const;
};

DiagGaussian gaussian_from_head(const Vec& mean, const Vec& raw_log_std);

double clamp_log_std(double raw);
double clamp_action(double a);

// Sum over dimensions of -log(sigma) - 0.5 log(2 pi) - (x - mu)^2 / (2 sigma^2).
double gaussian_log_prob(const DiagGaussian& dist, const Vec& x);

struct SquashedSample {
  Vec action;      // tanh(pre_tanh)
  Vec pre_tanh;    // mean + stddev * noise
  double log_prob = 0.0;
};

// Reparameterized draw of tanh(mean + stddev * noise) with the change-of-variables log-density.
SquashedSample tanh_gaussian_sample(const DiagGaussian& dist, const Vec& noise);

// Log-density of a squashed action, recovering the pre-tanh value with atanh.
double tanh_gaussian_log_prob(const DiagGaussian& dist, const Vec& action);

Vec standard_normal(std::size_t dim, Rng& rng);

}  // namespace mi_skills::nn
