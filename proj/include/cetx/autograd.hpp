#pragma once

// Tape-based reverse-mode differentiation.
//
// A Tape owns an append-only list of nodes. Every operation pushes one node
// holding its forward value and a closure that scatters the node's output
// gradient into its inputs. Since inputs always exist before the node that
// consumes them, walking the list backwards is a valid topological order.

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cetx/tensor.hpp"

namespace cetx {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool weight_decay_eligible = false;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v, bool decay)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), weight_decay_eligible(decay) {}

  void zero_grad() { grad.fill(T{0}); }
};

template <typename T>
class Tape;

/// Handle to a node on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(*this); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape->requires_grad(*this); }
};

template <typename T>
class Tape {
 public:
  /// Receives the gradient of the node's output; accumulates into inputs.
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// When recording is off no backward closures are kept (inference mode).
  void set_recording(bool on) { recording_ = on; }
  bool recording() const { return recording_; }

  Var<T> constant(Tensor<T> value) { return push_node(std::move(value), false, {}, nullptr); }

  /// Differentiable leaf (e.g. an input whose gradient is wanted).
  Var<T> leaf(Tensor<T> value) { return push_node(std::move(value), recording_, {}, nullptr); }

  /// Leaf bound to a parameter; accumulate_param_grads() writes back into it.
  Var<T> param(Parameter<T>& p) {
    auto v = push_node(p.value, recording_, {}, nullptr);
    nodes_[v.id].param = &p;
    return v;
  }

  /// Same value, cut from the graph.
  Var<T> stop_gradient(Var<T> v) { return constant(value(v)); }

  /// Records an operation. `backward` is dropped when no input needs a
  /// gradient or recording is off.
  Var<T> push(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward) {
    bool needs = false;
    if (recording_) {
      for (const auto& in : inputs) needs = needs || nodes_[in.id].requires_grad;
    }
    return push_node(std::move(value), needs, inputs, needs ? std::move(backward) : nullptr);
  }

  const Tensor<T>& value(Var<T> v) const { return nodes_[v.id].value; }
  bool requires_grad(Var<T> v) const { return nodes_[v.id].requires_grad; }

  /// Gradient buffer of `v` for accumulation, allocated on first use.
  /// Null when `v` does not require a gradient.
  Tensor<T>* grad_sink(Var<T> v) {
    auto& n = nodes_[v.id];
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<T>(n.value.shape());
    return &n.grad;
  }

  /// Gradient of `v` after backward(); empty tensor if none reached it.
  const Tensor<T>& grad(Var<T> v) const { return nodes_[v.id].grad; }

  /// Seeds d(loss)/d(loss) = 1 and propagates in strict reverse order.
  void backward(Var<T> loss) {
    if (value(loss).size() != 1) {
      throw ShapeError("backward() requires a scalar loss, got shape " +
                       shape_str(value(loss).shape()));
    }
    auto* seed = grad_sink(loss);
    if (seed == nullptr) return;
    (*seed)[0] += T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      n.backward(*this, n.grad);
    }
  }

  /// Adds every parameter leaf's gradient into its Parameter::grad.
  void accumulate_param_grads() {
    for (auto& n : nodes_) {
      if (n.param == nullptr || n.grad.empty()) continue;
      auto& dst = n.param->grad;
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
    }
  }

  /// Parameter leaves in insertion order, paired with their gradients.
  template <typename Fn>
  void for_each_param_grad(Fn&& fn) const {
    for (const auto& n : nodes_) {
      if (n.param != nullptr && !n.grad.empty()) fn(*n.param, n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
  };

  Var<T> push_node(Tensor<T> value, bool requires_grad, std::initializer_list<Var<T>> inputs,
                   BackwardFn backward) {
    for (const auto& in : inputs) {
      if (in.tape != this) throw Error("operation mixes variables from different tapes");
    }
    nodes_.push_back(Node{std::move(value), {}, std::move(backward), nullptr, requires_grad});
    return Var<T>{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  bool recording_ = true;
};

}  // namespace cetx
