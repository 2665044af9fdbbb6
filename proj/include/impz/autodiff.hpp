#pragma once

// Reverse-mode automatic differentiation over dense float64 tensors.
//
// A Tape records every operation applied to the Vars it hands out. Nodes are
// appended in evaluation order, so the node list is already a topological
// order and backward() is a single reverse sweep. A tape supports exactly one
// backward() per recording; reset() starts a fresh recording and invalidates
// every Var created before it.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "impz/tensor.hpp"

namespace impz {

class ParamStore;
struct Parameter;
class Tape;

/// Handle to a node on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  Tape& tape() const;
  std::size_t id() const { return id_; }
  bool requires_grad() const;
  /// False for a default-constructed handle.
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id, std::uint64_t generation)
      : tape_(tape), id_(id), generation_(generation) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
  std::uint64_t generation_ = 0;
};

class Tape {
 public:
  // Receives the node's output gradient; adds into parent gradients.
  using BackwardFn = std::function<void(const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Constant input; no gradient is tracked.
  Var constant(Tensor value);
  /// Differentiable leaf; its gradient is readable through grad() after
  /// backward().
  Var leaf(Tensor value);
  /// Binds a stored parameter. Binding the same name twice on one recording
  /// returns the same node. backward() accumulates into the parameter's grad.
  Var param(ParamStore& store, const std::string& name);

  void backward(const Var& loss);

  const Tensor& value(const Var& v) const;
  /// Gradient of the last backward() root w.r.t. v; zeros when v was not
  /// reached.
  Tensor grad(const Var& v) const;
  bool requires_grad(const Var& v) const;

  void reset();
  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

  /// When enabled (default) every recorded value is checked for NaN/Inf.
  void set_check_finite(bool on) { check_finite_ = on; }

  // Op implementation interface.
  Var record(const char* op, Tensor value, const std::vector<Var>& parents,
             BackwardFn fn);
  /// Gradient buffer for v, allocated on first use. Null when v does not
  /// require a gradient.
  double* grad_buffer(const Var& v);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
    ParamStore* store = nullptr;
  };

  void check_live(const Var& v) const;
  Var push(Node node);

  std::vector<Node> nodes_;
  std::vector<std::pair<Parameter*, std::size_t>> bound_;
  std::uint64_t generation_ = 1;
  bool backward_done_ = false;
  bool check_finite_ = true;
};

namespace ad {

// Elementwise. Operands must have equal shapes, or one of them a single
// element which is broadcast.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double c);
Var tanh(const Var& x);
Var sigmoid(const Var& x);

/// x: [..., M, K], w: [K, N] -> [..., M, N]
Var matmul(const Var& x, const Var& w);

Var sum(const Var& x);
/// Mean of squared differences over all elements; scalar result.
Var mse(const Var& a, const Var& b);

/// Cross-correlation. x: [B, Cin, L], w: [Cout, Cin, K], bias: [Cout].
Var conv1d(const Var& x, const Var& w, const Var& bias, std::size_t dilation,
           std::size_t padding, std::size_t stride);
Var conv1d(const Var& x, const Var& w, std::size_t dilation,
           std::size_t padding, std::size_t stride);
/// x: [B, Cin, L], w: [Cin, Cout, K], bias: [Cout].
/// Lout = (L - 1) * stride + dilation * (K - 1) + 1 - 2 * padding.
Var conv_transpose1d(const Var& x, const Var& w, const Var& bias,
                     std::size_t stride, std::size_t padding,
                     std::size_t dilation = 1);
Var conv_transpose1d(const Var& x, const Var& w, std::size_t stride,
                     std::size_t padding, std::size_t dilation = 1);
/// x: [B, C, L], gamma/beta: [C].
Var group_norm(const Var& x, const Var& gamma, const Var& beta,
               std::size_t groups, double eps = 1e-5);

/// Single-direction GRU over the time axis with zero initial state.
/// x: [B, C, L], w_ih: [C, 3H], w_hh: [H, 3H], bias: [3H]; gate blocks are
/// ordered (update, reset, candidate). Returns [B, H, L].
Var gru(const Var& x, const Var& w_ih, const Var& w_hh, const Var& bias,
        bool reverse);

// Shape plumbing.
Var reshape(const Var& x, Shape shape);
Var concat_channels(const std::vector<Var>& xs);  // [B, Ci, L] -> [B, sum Ci, L]
Var slice_last(const Var& x, std::size_t begin, std::size_t end);
Var batch_slice(const Var& x, std::size_t begin, std::size_t end);
Var time_slice(const Var& x, std::size_t t);    // [B, C, L] -> [B, C]
Var stack_time(const std::vector<Var>& steps);  // L x [B, C] -> [B, C, L]

}  // namespace ad

}  // namespace impz
