#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "ofnlab/rng.hpp"
#include "ofnlab/tensor.hpp"

namespace ofn {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Linear record of primitive applications for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the record is topologically
/// sorted by construction. A node requires a gradient iff one of its inputs
/// does; nodes that do not never get a backward closure.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// A named leaf whose gradient is reported by backward(). Repeated uses of
  /// the same name (on separate leaves) accumulate into one gradient entry.
  Var parameter(std::string name, Tensor value);

  /// Appends a node; `backward` is dropped if no input requires a gradient.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Upstream gradient of a node during the backward pass (empty if untouched).
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  /// Accumulation buffer for a node's gradient, zero-initialized on first use.
  Tensor& grad_buffer(std::size_t id);

  /// Reverse sweep from a scalar root. Returns d(root)/d(parameter) for every
  /// named parameter leaf that the root depends on.
  GradientMap backward(Var root);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::string param_name;
  };

  std::vector<Node> nodes_;
};

enum class Activation { relu, elu };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

/// Guard used by the unit-ball projection: rows are divided by max(||x||, eps).
inline constexpr double kUnitBallEpsilon = 1e-8;

// Network primitives -------------------------------------------------------

/// input[B x n] * weight[n x m] + bias[m].
Var linear(Var input, Var weight, Var bias);
Var relu(Var x);
/// ELU with alpha = 1.
Var elu(Var x);
Var activation(Var x, Activation kind);
/// Row-wise projection onto the unit sphere, x / max(||x||_2, eps).
Var unit_ball_project(Var x, double eps = kUnitBallEpsilon);
/// Inverted dropout. Identity when !training or rate == 0. rate must be in [0, 1).
Var dropout(Var x, double rate, Rng& rng, bool training);
/// [B x n] | [B x m] -> [B x (n + m)].
Var concat_cols(Var a, Var b);

// Elementwise --------------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double c);
Var add_scalar(Var x, double c);
Var tanh(Var x);
Var exp(Var x);
Var square(Var x);
/// Hard clamp; the gradient is zero outside [lo, hi].
Var clamp(Var x, double lo, double hi);
/// log(1 - tanh(u)^2), evaluated stably as 2 (log 2 - u - softplus(-2u)).
Var log1m_tanh_sq(Var u);
/// Elementwise minimum; ties route the gradient to `a`.
Var minimum(Var a, Var b);

// Reductions ---------------------------------------------------------------

Var sum(Var x);
Var mean(Var x);
/// [B x n] -> [B x 1].
Var row_sum(Var x);
/// [B x n] -> [B x 1] Euclidean norms; subgradient 0 at the origin.
Var row_l2_norm(Var x);
/// Sum of squared entries, as a scalar.
Var sum_squares(Var x);

/// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h for every entry of
/// every parameter. `f` must be deterministic.
GradientMap finite_difference_gradient(const std::function<double(const ParamMap&)>& f,
                                       const ParamMap& params, double h);

}  // namespace ofn
