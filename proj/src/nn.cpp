#include "mi_skills/nn.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace mi_skills::nn {

namespace {

std::vector<std::size_t> make_offsets(const std::vector<LayerShape>& shapes) {
  std::vector<std::size_t> offsets;
  offsets.reserve(shapes.size());
  std::size_t total = 0;
  for (const auto& s : shapes) {
    offsets.push_back(total);
    total += s.size();
  }
  return offsets;
}

std::size_t total_size(const std::vector<LayerShape>& shapes) {
  return std::accumulate(shapes.begin(), shapes.end(), std::size_t{0},
                         [](std::size_t acc, const LayerShape& s) { return acc + s.size(); });
}

void check_chain(const std::vector<LayerShape>& shapes) {
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    if (shapes[k].bias != shapes[k].rows) {
      throw ConfigError("layer " + std::to_string(k) + ": bias length must equal output rows");
    }
    if (k > 0 && shapes[k].cols != shapes[k - 1].rows) {
      throw ConfigError("layer " + std::to_string(k) + ": input width " +
                        std::to_string(shapes[k].cols) + " does not match previous output " +
                        std::to_string(shapes[k - 1].rows));
    }
  }
}

}  // namespace

ParamVector::ParamVector(std::vector<LayerShape> shapes)
    : shapes_(std::move(shapes)), offsets_(make_offsets(shapes_)), values_(total_size(shapes_), 0.0) {}

ParamVector::ParamVector(std::vector<LayerShape> shapes, std::vector<double> values)
    : shapes_(std::move(shapes)), offsets_(make_offsets(shapes_)), values_(values.begin(), values.end()) {
  if (values_.size() != total_size(shapes_)) {
    throw ConfigError("parameter length " + std::to_string(values_.size()) +
                      " does not match shape table total " + std::to_string(total_size(shapes_)));
  }
}

Eigen::Map<const Mat> ParamVector::weight(std::size_t layer) const {
  const auto& s = shapes_.at(layer);
  return {values_.data() + offsets_[layer], static_cast<Eigen::Index>(s.rows),
          static_cast<Eigen::Index>(s.cols)};
}

Eigen::Map<Mat> ParamVector::weight(std::size_t layer) {
  const auto& s = shapes_.at(layer);
  return {values_.data() + offsets_[layer], static_cast<Eigen::Index>(s.rows),
          static_cast<Eigen::Index>(s.cols)};
}

Eigen::Map<const Vec> ParamVector::bias(std::size_t layer) const {
  const auto& s = shapes_.at(layer);
  return {values_.data() + offsets_[layer] + s.rows * s.cols, static_cast<Eigen::Index>(s.bias)};
}

Eigen::Map<Vec> ParamVector::bias(std::size_t layer) {
  const auto& s = shapes_.at(layer);
  return {values_.data() + offsets_[layer] + s.rows * s.cols, static_cast<Eigen::Index>(s.bias)};
}

bool ParamVector::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::vector<LayerShape> mlp_shapes(std::span<const std::size_t> sizes) {
  if (sizes.size() < 2) throw ConfigError("an MLP needs at least an input and an output size");
  std::vector<LayerShape> shapes;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    if (sizes[k] == 0 || sizes[k + 1] == 0) throw ConfigError("MLP layer widths must be positive");
    shapes.push_back({sizes[k + 1], sizes[k], sizes[k + 1]});
  }
  return shapes;
}

ParamVector init_mlp(std::span<const std::size_t> sizes, Rng& rng) {
  ParamVector params(mlp_shapes(sizes));
  for (std::size_t k = 0; k < params.num_layers(); ++k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(params.shapes()[k].cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto w = params.weight(k);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  }
  return params;
}

std::size_t mlp_input_dim(const ParamVector& params) { return params.shapes().front().cols; }

std::size_t mlp_output_dim(const ParamVector& params) { return params.shapes().back().rows; }

Vec mlp_forward(const ParamVector& params, std::span<const double> input) {
  Mat x(1, static_cast<Eigen::Index>(input.size()));
  for (std::size_t i = 0; i < input.size(); ++i) x(0, static_cast<Eigen::Index>(i)) = input[i];
  const auto cache = mlp_forward_batch(params, x);
  return cache.output().row(0).transpose();
}

MlpCache mlp_forward_batch(const ParamVector& params, const Mat& input) {
  if (params.num_layers() == 0) throw ConfigError("empty network");
  check_chain(params.shapes());
  if (static_cast<std::size_t>(input.cols()) != mlp_input_dim(params)) {
    throw ConfigError("network input width " + std::to_string(mlp_input_dim(params)) +
                      " but got " + std::to_string(input.cols()));
  }
  MlpCache cache;
  cache.activations.reserve(params.num_layers() + 1);
  cache.activations.push_back(input);
  for (std::size_t k = 0; k < params.num_layers(); ++k) {
    const Mat& prev = cache.activations.back();
    Mat z = prev * params.weight(k).transpose();
    z.rowwise() += params.bias(k).transpose();
    if (k + 1 < params.num_layers()) z = z.cwiseMax(0.0);
    cache.activations.push_back(std::move(z));
  }
  return cache;
}

MlpGradient mlp_backward(const ParamVector& params, const MlpCache& cache, const Mat& d_output,
                         bool want_input_gradient) {
  const std::size_t layers = params.num_layers();
  if (cache.activations.size() != layers + 1) throw ConfigError("cache does not match network");
  if (d_output.rows() != cache.output().rows() || d_output.cols() != cache.output().cols()) {
    throw ConfigError("output gradient shape does not match network output");
  }
  MlpGradient grad;
  grad.params.assign(params.size(), 0.0);
  Mat delta = d_output;
  for (std::size_t k = layers; k-- > 0;) {
    const Mat& a_prev = cache.activations[k];
    const auto& shape = params.shapes()[k];
    Eigen::Map<Mat> dw(grad.params.data() + params.offset(k), static_cast<Eigen::Index>(shape.rows),
                       static_cast<Eigen::Index>(shape.cols));
    Eigen::Map<Vec> db(grad.params.data() + params.offset(k) + shape.rows * shape.cols,
                       static_cast<Eigen::Index>(shape.bias));
    const Mat dw_k = delta.transpose() * a_prev;
    const Vec db_k = delta.colwise().sum().transpose();
    dw = dw_k;
    db = db_k;
    if (k == 0 && !want_input_gradient) break;
    Mat d_prev = delta * params.weight(k);
    if (k > 0) {
      // ReLU derivative; a_prev is the post-activation value.
      d_prev = (a_prev.array() > 0.0).select(d_prev, 0.0);
      delta = std::move(d_prev);
    } else {
      grad.input = std::move(d_prev);
    }
  }
  return grad;
}

AdamState AdamState::for_size(std::size_t n, double lr) {
  AdamState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  s.lr = lr;
  return s;
}

void adam_step(AdamState& state, ParamVector& params, std::span<const double> gradient) {
  if (gradient.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ConfigError("adam_step: length mismatch (params " + std::to_string(params.size()) +
                      ", gradient " + std::to_string(gradient.size()) + ", moments " +
                      std::to_string(state.m.size()) + ")");
  }
  if (state.t < 0) throw ConfigError("adam_step: negative step counter");
  state.t += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  auto p = params.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double g = gradient[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    p[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

}  // namespace mi_skills::nn
