#pragma once

#include "cyclelab/tensor.hpp"

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

namespace cyclelab {

template <typename Scalar>
class Graph;

/// Handle to a node on a Graph tape.
template <typename Scalar>
struct Var {
  Graph<Scalar>* graph = nullptr;
  std::size_t id = 0;

  [[nodiscard]] const Tensor<Scalar>& value() const { return graph->value(*this); }
  [[nodiscard]] const Shape& shape() const { return graph->value(*this).shape(); }
  [[nodiscard]] bool requires_grad() const { return graph->requires_grad(*this); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse sweep
/// visits every consumer before its producers.
template <typename Scalar>
class Graph {
 public:
  using Backward = std::function<void(Graph&)>;

  Graph() { nodes_.reserve(256); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Data that never receives a gradient.
  Var<Scalar> constant(Tensor<Scalar> value) { return push(std::move(value), false, {}); }

  /// Leaf whose gradient is readable after backward() through grad().
  Var<Scalar> input(Tensor<Scalar> value) { return push(std::move(value), true, {}); }

  /// Leaf whose gradient is added into `accumulator` by backward().
  Var<Scalar> parameter(const Tensor<Scalar>& value, Tensor<Scalar>* accumulator) {
    Var<Scalar> v = push(value, true, {});
    nodes_[v.id].accumulator = accumulator;
    return v;
  }

  /// Result of an op. `backward` runs only if some input requires a gradient.
  Var<Scalar> op(Tensor<Scalar> value, bool requires_grad, Backward backward) {
    return push(std::move(value), requires_grad, requires_grad ? std::move(backward) : Backward{});
  }

  [[nodiscard]] const Tensor<Scalar>& value(Var<Scalar> v) const { return nodes_.at(v.id).value; }
  [[nodiscard]] bool requires_grad(Var<Scalar> v) const { return nodes_.at(v.id).requires_grad; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  /// Gradient buffer of a node, allocated on first touch.
  Tensor<Scalar>& grad(Var<Scalar> v) {
    Node& node = nodes_.at(v.id);
    if (node.grad.empty() && node.value.size() > 0) node.grad = Tensor<Scalar>(node.value.shape());
    return node.grad;
  }
  [[nodiscard]] bool has_grad(Var<Scalar> v) const { return !nodes_.at(v.id).grad.empty(); }

  /// Propagates d(loss)/d(node) to every node that requires a gradient.
  void backward(Var<Scalar> loss) {
    if (value(loss).size() != 1) throw ShapeError("backward: loss must be a scalar");
    if (!requires_grad(loss)) return;
    grad(loss)[0] = Scalar(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (node.grad.empty()) continue;
      if (node.backward) node.backward(*this);
      if (node.accumulator != nullptr) {
        Tensor<Scalar>& acc = *node.accumulator;
        if (acc.empty()) acc = Tensor<Scalar>(node.value.shape());
        acc.data() += nodes_[i].grad.data();
      }
    }
  }

  /// When enabled, non-smooth ops fold their branch pattern into kink_signature().
  void set_track_kinks(bool on) { track_kinks_ = on; }
  [[nodiscard]] bool track_kinks() const { return track_kinks_; }
  void fold_kink(bool branch) {
    kink_hash_ = (kink_hash_ ^ static_cast<std::uint64_t>(branch ? 0x9e37u : 0x7f4au)) * 0x100000001b3ULL;
  }
  [[nodiscard]] std::uint64_t kink_signature() const { return kink_hash_; }

 private:
  struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    bool requires_grad = false;
    Backward backward;
    Tensor<Scalar>* accumulator = nullptr;
  };

  Var<Scalar> push(Tensor<Scalar> value, bool requires_grad, Backward backward) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var<Scalar>{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  bool track_kinks_ = false;
  std::uint64_t kink_hash_ = 0xcbf29ce484222325ULL;
};

}  // namespace cyclelab
