#include "mi_skills/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mi_skills::nn {

void DiagGaussian::validate() const {
  if (mean.size() != stddev.size()) {
    throw ConfigError("gaussian mean has " + std::to_string(mean.size()) + " dims but stddev has " +
                      std::to_string(stddev.size()));
  }
  for (Eigen::Index i = 0; i < stddev.size(); ++i) {
    if (!(stddev[i] > 0.0)) {
      throw ConfigError("gaussian stddev must be positive, got " + std::to_string(stddev[i]) +
                        " at dim " + std::to_string(i));
    }
  }
}

double clamp_log_std(double raw) { return std::clamp(raw, kLogStdMin, kLogStdMax); }

double clamp_action(double a) { return std::clamp(a, -1.0 + kTanhMargin, 1.0 - kTanhMargin); }

DiagGaussian gaussian_from_head(const Vec& mean, const Vec& raw_log_std) {
  DiagGaussian g{mean, Vec(raw_log_std.size())};
  for (Eigen::Index i = 0; i < raw_log_std.size(); ++i) g.stddev[i] = std::exp(clamp_log_std(raw_log_std[i]));
  return g;
}

double gaussian_log_prob(const DiagGaussian& dist, const Vec& x) {
  dist.validate();
  if (x.size() != dist.mean.size()) {
    throw ConfigError("gaussian_log_prob: point has " + std::to_string(x.size()) + " dims, expected " +
                      std::to_string(dist.mean.size()));
  }
  double lp = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double z = (x[i] - dist.mean[i]) / dist.stddev[i];
    lp += -std::log(dist.stddev[i]) - kHalfLog2Pi - 0.5 * z * z;
  }
  return lp;
}

SquashedSample tanh_gaussian_sample(const DiagGaussian& dist, const Vec& noise) {
  dist.validate();
  if (noise.size() != dist.mean.size()) {
    throw ConfigError("tanh_gaussian_sample: noise has " + std::to_string(noise.size()) +
                      " dims, expected " + std::to_string(dist.mean.size()));
  }
  SquashedSample out;
  out.pre_tanh = dist.mean + dist.stddev.cwiseProduct(noise);
  out.action = out.pre_tanh.array().tanh().matrix();
  double lp = 0.0;
  for (Eigen::Index i = 0; i < noise.size(); ++i) {
    const double a = clamp_action(out.action[i]);
    lp += -std::log(dist.stddev[i]) - kHalfLog2Pi - 0.5 * noise[i] * noise[i] - std::log(1.0 - a * a);
  }
  out.log_prob = lp;
  return out;
}

double tanh_gaussian_log_prob(const DiagGaussian& dist, const Vec& action) {
  dist.validate();
  if (action.size() != dist.mean.size()) {
    throw ConfigError("tanh_gaussian_log_prob: action has " + std::to_string(action.size()) +
                      " dims, expected " + std::to_string(dist.mean.size()));
  }
  double lp = 0.0;
  for (Eigen::Index i = 0; i < action.size(); ++i) {
    const double a = clamp_action(action[i]);
    const double u = std::atanh(a);
    const double z = (u - dist.mean[i]) / dist.stddev[i];
    lp += -std::log(dist.stddev[i]) - kHalfLog2Pi - 0.5 * z * z - std::log(1.0 - a * a);
  }
  return lp;
}

Vec standard_normal(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = n(rng);
  return v;
}

}  // namespace mi_skills::nn
