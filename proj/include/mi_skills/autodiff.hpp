#pragma once

#include "mi_skills/nn.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

// Scalar reverse-mode differentiation over the primitives the learners use
// (affine maps, rectifier, tanh, log, exp, square, sums, elementwise arithmetic).
namespace mi_skills::nn::ad {

class Tape;

class Var {
 public:
  Var() = default;
  double value() const;
  std::size_t index() const { return index_; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}
  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

class Tape {
 public:
  Var variable(double value);
  Var constant(double value) { return variable(value); }

  // Records a node with up to two parents and their local partial derivatives.
  Var record(const char* op, double value, std::size_t a, double da);
  Var record(const char* op, double value, std::size_t a, double da, std::size_t b, double db);

  double value(std::size_t i) const { return nodes_.at(i).value; }
  std::size_t size() const { return nodes_.size(); }

  // Adjoint of `output` with respect to every node on the tape.
  std::vector<double> adjoints(Var output) const;

  // Describes the first non-finite node, or returns an empty string.
  std::string first_non_finite() const;

 private:
  struct Node {
    const char* op;
    double value;
    std::size_t parents[2];
    double partials[2];
    int arity;
  };
  std::vector<Node> nodes_;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator+(Var a, double b);
Var operator+(double a, Var b);
Var operator-(Var a, double b);
Var operator-(double a, Var b);
Var operator*(Var a, double b);
Var operator*(double a, Var b);
Var operator-(Var a);

Var relu(Var x);
Var tanh(Var x);
Var log(Var x);
Var exp(Var x);
Var square(Var x);
Var sum(std::span<const Var> xs);

// Forward pass of a ReLU MLP whose parameters are tape variables laid out per `shapes`.
std::vector<Var> mlp_forward(std::span<const Var> params, const std::vector<LayerShape>& shapes,
                             std::span<const Var> input);

using LossClosure = std::function<Var(Tape&, std::span<const Var> params)>;

// d loss / d params. Throws NumericError naming the offending intermediate when the loss is not finite.
std::vector<double> grad(const ParamVector& params, const LossClosure& loss);

}  // namespace mi_skills::nn::ad
