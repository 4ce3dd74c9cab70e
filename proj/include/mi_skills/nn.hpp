#pragma once

#include "mi_skills/core.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace mi_skills::nn {

// One affine layer: weight is rows x cols (out x in), followed by a bias of length `bias`.
struct LayerShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t bias = 0;

  std::size_t size() const { return rows * cols + bias; }
  bool operator==(const LayerShape&) const = default;
};

using AlignedDoubles = std::vector<double, Eigen::aligned_allocator<double>>;

// Flat parameter storage with a shape table. Layer k occupies
// [offset(k), offset(k) + shapes[k].size()), weights row-major then bias.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::vector<LayerShape> shapes);
  ParamVector(std::vector<LayerShape> shapes, std::vector<double> values);

  std::size_t size() const { return values_.size(); }
  std::size_t num_layers() const { return shapes_.size(); }
  const std::vector<LayerShape>& shapes() const { return shapes_; }
  std::size_t offset(std::size_t layer) const { return offsets_.at(layer); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  Eigen::Map<const Mat> weight(std::size_t layer) const;
  Eigen::Map<Mat> weight(std::size_t layer);
  Eigen::Map<const Vec> bias(std::size_t layer) const;
  Eigen::Map<Vec> bias(std::size_t layer);

  bool all_finite() const;
  bool operator==(const ParamVector&) const = default;

 private:
  std::vector<LayerShape> shapes_;
  std::vector<std::size_t> offsets_;
  AlignedDoubles values_;
};

// Layer widths including input and output, e.g. {6, 128, 128, 4}.
std::vector<LayerShape> mlp_shapes(std::span<const std::size_t> sizes);

// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
ParamVector init_mlp(std::span<const std::size_t> sizes, Rng& rng);

std::size_t mlp_input_dim(const ParamVector& params);
std::size_t mlp_output_dim(const ParamVector& params);

// Rectified-linear hidden layers, affine output.
Vec mlp_forward(const ParamVector& params, std::span<const double> input);

struct MlpCache {
  // activations[0] is the input batch, activations.back() the affine output.
  std::vector<Mat> activations;
  const Mat& output() const { return activations.back(); }
};

MlpCache mlp_forward_batch(const ParamVector& params, const Mat& input);

struct MlpGradient {
  std::vector<double> params;
  Mat input;  // empty unless requested
};

// Reverse pass for a loss whose gradient with respect to the output batch is `d_output`.
MlpGradient mlp_backward(const ParamVector& params, const MlpCache& cache, const Mat& d_output,
                         bool want_input_gradient = false);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_size(std::size_t n, double lr);
};

// In-place bias-corrected Adam update; increments state.t by one.
void adam_step(AdamState& state, ParamVector& params, std::span<const double> gradient);

}  // namespace mi_skills::nn
