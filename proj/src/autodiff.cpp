#include "mi_skills/autodiff.hpp"

#include <cmath>
#include <sstream>

namespace mi_skills::nn::ad {

namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) throw ConfigError("variables from different tapes");
  return *a.tape();
}

Tape& tape_of(Var a) {
  if (a.tape() == nullptr) throw ConfigError("variable is not attached to a tape");
  return *a.tape();
}

}  // namespace

double Var::value() const { return tape_of(*this).value(index_); }

Var Tape::variable(double value) {
  nodes_.push_back({"input", value, {0, 0}, {0.0, 0.0}, 0});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, double value, std::size_t a, double da) {
  nodes_.push_back({op, value, {a, 0}, {da, 0.0}, 1});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, double value, std::size_t a, double da, std::size_t b, double db) {
  nodes_.push_back({op, value, {a, b}, {da, db}, 2});
  return Var(this, nodes_.size() - 1);
}

std::vector<double> Tape::adjoints(Var output) const {
  std::vector<double> adj(nodes_.size(), 0.0);
  adj.at(output.index()) = 1.0;
  for (std::size_t i = output.index() + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (adj[i] == 0.0) continue;
    for (int k = 0; k < n.arity; ++k) adj[n.parents[k]] += adj[i] * n.partials[k];
  }
  return adj;
}

std::string Tape::first_non_finite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!std::isfinite(nodes_[i].value)) {
      std::ostringstream os;
      os << "node " << i << " (" << nodes_[i].op << ") = " << nodes_[i].value;
      return os.str();
    }
  }
  return {};
}

Var operator+(Var a, Var b) {
  return same_tape(a, b).record("add", a.value() + b.value(), a.index(), 1.0, b.index(), 1.0);
}
Var operator-(Var a, Var b) {
  return same_tape(a, b).record("sub", a.value() - b.value(), a.index(), 1.0, b.index(), -1.0);
}
Var operator*(Var a, Var b) {
  return same_tape(a, b).record("mul", a.value() * b.value(), a.index(), b.value(), b.index(),
                                a.value());
}
Var operator/(Var a, Var b) {
  const double bv = b.value();
  return same_tape(a, b).record("div", a.value() / bv, a.index(), 1.0 / bv, b.index(),
                                -a.value() / (bv * bv));
}
Var operator+(Var a, double b) { return tape_of(a).record("add_c", a.value() + b, a.index(), 1.0); }
Var operator+(double a, Var b) { return b + a; }
Var operator-(Var a, double b) { return tape_of(a).record("sub_c", a.value() - b, a.index(), 1.0); }
Var operator-(double a, Var b) { return tape_of(b).record("rsub_c", a - b.value(), b.index(), -1.0); }
Var operator*(Var a, double b) { return tape_of(a).record("scale", a.value() * b, a.index(), b); }
Var operator*(double a, Var b) { return b * a; }
Var operator-(Var a) { return tape_of(a).record("neg", -a.value(), a.index(), -1.0); }

Var relu(Var x) {
  const double v = x.value();
  return tape_of(x).record("relu", v > 0.0 ? v : 0.0, x.index(), v > 0.0 ? 1.0 : 0.0);
}

Var tanh(Var x) {
  const double t = std::tanh(x.value());
  return tape_of(x).record("tanh", t, x.index(), 1.0 - t * t);
}

Var log(Var x) {
  const double v = x.value();
  return tape_of(x).record("log", std::log(v), x.index(), 1.0 / v);
}

Var exp(Var x) {
  const double e = std::exp(x.value());
  return tape_of(x).record("exp", e, x.index(), e);
}

Var square(Var x) {
  const double v = x.value();
  return tape_of(x).record("square", v * v, x.index(), 2.0 * v);
}

Var sum(std::span<const Var> xs) {
  if (xs.empty()) throw ConfigError("sum of no variables");
  Var acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = acc + xs[i];
  return acc;
}

std::vector<Var> mlp_forward(std::span<const Var> params, const std::vector<LayerShape>& shapes,
                             std::span<const Var> input) {
  if (shapes.empty()) throw ConfigError("empty network");
  if (input.size() != shapes.front().cols) {
    throw ConfigError("network input width " + std::to_string(shapes.front().cols) + " but got " +
                      std::to_string(input.size()));
  }
  std::vector<Var> x(input.begin(), input.end());
  std::size_t offset = 0;
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    const auto& s = shapes[k];
    if (offset + s.size() > params.size()) throw ConfigError("parameter span shorter than shape table");
    std::vector<Var> y;
    y.reserve(s.rows);
    for (std::size_t r = 0; r < s.rows; ++r) {
      Var acc = params[offset + s.rows * s.cols + r];
      for (std::size_t c = 0; c < s.cols; ++c) acc = acc + params[offset + r * s.cols + c] * x[c];
      y.push_back(k + 1 < shapes.size() ? relu(acc) : acc);
    }
    offset += s.size();
    x = std::move(y);
  }
  return x;
}

std::vector<double> grad(const ParamVector& params, const LossClosure& loss) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (double v : params.values()) vars.push_back(tape.variable(v));
  const Var out = loss(tape, vars);
  if (!std::isfinite(out.value())) {
    throw NumericError("non-finite loss; first offending intermediate: " + tape.first_non_finite());
  }
  const auto adj = tape.adjoints(out);
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = adj[vars[i].index()];
  return g;
}

}  // namespace mi_skills::nn::ad
