#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tsld/numkit/tensor.hpp"

namespace tsld {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  double item() const { return value().item(); }
  std::size_t size() const { return value().size(); }
};

/// Records a computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so iterating them backwards is a
/// valid topological order. Parameters are borrowed, not copied: a model must
/// not be mutated while a tape that references it is alive. A tape has a single
/// owner; distinct tapes are independent.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var input(Tensor value) {
    check_finite(value);
    nodes_.push_back(Node{std::move(value), nullptr, {}, {}});
    return {this, nodes_.size() - 1};
  }

  Var input(std::span<const double> v) { return input(Tensor::vector(v)); }

  /// Leaf for a model parameter. Repeated calls with the same parameter return
  /// the same node, so gradients from every use accumulate in one place.
  Var param(const Parameter& p) {
    if (auto it = param_index_.find(&p); it != param_index_.end()) {
      return {this, it->second};
    }
    nodes_.push_back(Node{Tensor{}, &p.value, {}, {}});
    const std::size_t id = nodes_.size() - 1;
    param_index_.emplace(&p, id);
    params_.emplace_back(&p, id);
    return {this, id};
  }

  Var record(Tensor value, Backward backward) {
    check_finite(value);
    nodes_.push_back(Node{std::move(value), nullptr, {}, std::move(backward)});
    return {this, nodes_.size() - 1};
  }

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.borrowed ? *n.borrowed : n.value;
  }

  /// Gradient accumulator of a node, allocated on first touch. An allocated
  /// buffer means the node was reached by the current reverse sweep.
  std::vector<double>& grad_buffer(std::size_t id) {
    auto& g = nodes_[id].grad;
    if (g.empty()) g.assign(value(id).size(), 0.0);
    return g;
  }

  std::span<const double> grad(std::size_t id) const { return nodes_[id].grad; }
  bool reached(std::size_t id) const { return !nodes_[id].grad.empty(); }

  Tensor grad_tensor(std::size_t id) const {
    const Tensor& v = value(id);
    const auto& g = nodes_[id].grad;
    if (g.empty()) return Tensor(v.shape());
    return Tensor(v.shape(), g);
  }

  void zero_grad() {
    for (auto& n : nodes_) n.grad.clear();
  }

  /// Reverse sweep seeded with `seed` (a vector-Jacobian product). Only nodes
  /// recorded before `output` are visited.
  void backward(Var output, std::span<const double> seed) {
    if (output.tape != this) throw ContractError("variable belongs to another tape");
    if (seed.size() != value(output.id).size()) {
      throw ShapeError("backward seed has length " + std::to_string(seed.size()) +
                       ", output has " + std::to_string(value(output.id).size()));
    }
    auto& g = grad_buffer(output.id);
    for (std::size_t i = 0; i < seed.size(); ++i) g[i] += seed[i];
    for (std::size_t id = output.id + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (n.grad.empty() || !n.backward) continue;
      n.backward(*this, id);
    }
  }

  /// Reverse sweep from a scalar loss.
  void backward(Var loss) {
    if (value(loss.id).size() != 1) {
      throw ContractError("backward() without a seed needs a scalar output, got shape " +
                          value(loss.id).shape_string());
    }
    const double one = 1.0;
    backward(loss, std::span<const double>(&one, 1));
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  const std::vector<std::pair<const Parameter*, std::size_t>>& params() const noexcept {
    return params_;
  }

 private:
  struct Node {
    Tensor value;
    const Tensor* borrowed;
    std::vector<double> grad;
    Backward backward;
  };

  static void check_finite(const Tensor& t) {
    if (!t.all_finite()) throw NumericError("non-finite value recorded on tape");
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_index_;
  std::vector<std::pair<const Parameter*, std::size_t>> params_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

}  // namespace tsld
