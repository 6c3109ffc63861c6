#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "gridcast/kernels.hpp"
#include "gridcast/tensor.hpp"

namespace gridcast {

template <typename T>
struct GradMap {
  std::unordered_map<std::int32_t, Tensor<T>> by_node;

  bool has(const Tensor<T>& leaf) const {
    return leaf.node >= 0 && by_node.count(leaf.node) > 0;
  }
  const Tensor<T>& at(const Tensor<T>& leaf) const {
    auto it = leaf.node >= 0 ? by_node.find(leaf.node) : by_node.end();
    if (it == by_node.end()) contract_error("grad map: no gradient recorded for this leaf");
    return it->second;
  }
  Tensor<T> get_or_zeros(const Tensor<T>& leaf) const {
    if (has(leaf)) return at(leaf);
    return Tensor<T>::zeros(leaf.shape);
  }
};

// Per-training-step recording of primitive ops in topological order. One
// recording tape per thread of execution; freed (frozen) by backward().
template <typename T>
class Tape {
 public:
  using BackFn = std::function<void(Tape&, const std::vector<T>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }
  std::size_t node_count() const { return nodes_.size(); }

  // Register a watched leaf (typically a parameter). Shares storage with v.
  Tensor<T> leaf(const Tensor<T>& v) {
    Tensor<T> out = v;
    out.tape = this;
    out.node = record({}, v.shape, nullptr);
    return out;
  }

  std::int32_t record(std::vector<std::int32_t> inputs, const Shape& out_shape, BackFn fn) {
    if (frozen_) contract_error("tape: recording onto a frozen tape");
    nodes_.push_back(Node{std::move(inputs), out_shape, std::move(fn)});
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }

  // Gradient buffer for a node, zero-initialized on first touch.
  std::vector<T>& grad_buf(std::int32_t node) {
    auto& g = grads_[node];
    if (g.empty()) g.assign(static_cast<std::size_t>(shape_numel(nodes_[node].out_shape)), T{0});
    return g;
  }

  void grad_accum(std::int32_t node, const T* contrib, std::size_t n) {
    if (node < 0) return;  // constant input, no gradient flows
    auto& g = grad_buf(node);
    kernels::table<T>().add(g.data(), contrib, g.data(), n);
  }

  // Reverse sweep from a scalar loss. Returns gradients for every leaf the
  // loss actually reaches; freezes the tape.
  GradMap<T> backward(const Tensor<T>& loss) {
    if (loss.tape != this || loss.node < 0) contract_error("backward: loss is not on this tape");
    if (loss.numel() != 1) contract_error("backward: loss must be scalar, got " + shape_str(loss.shape));
    frozen_ = true;
    grads_.assign(nodes_.size(), {});
    grads_[loss.node] = {T{1}};

    GradMap<T> out;
    for (std::int32_t i = loss.node; i >= 0; --i) {
      auto& g = grads_[i];
      if (g.empty()) continue;
      Node& n = nodes_[i];
      if (n.fn) {
        n.fn(*this, g);
        std::vector<T>().swap(g);  // free as we go
      } else {
        Tensor<T> gt;
        gt.shape = n.out_shape;
        gt.store = std::make_shared<std::vector<T>>(std::move(g));
        out.by_node.emplace(i, std::move(gt));
      }
    }
    grads_.clear();
    return out;
  }

 private:
  struct Node {
    std::vector<std::int32_t> inputs;
    Shape out_shape;
    BackFn fn;  // null for leaves
  };

  std::vector<Node> nodes_;
  std::vector<std::vector<T>> grads_;
  bool frozen_ = false;
};

namespace detail {

// Common tape of all taped operands; throws on mixed tapes.
template <typename T>
Tape<T>* common_tape(const char* op, std::initializer_list<const Tensor<T>*> ts) {
  Tape<T>* tp = nullptr;
  for (const Tensor<T>* t : ts) {
    if (!t->on_tape()) continue;
    if (tp == nullptr) tp = t->tape;
    else if (tp != t->tape)
      contract_error(std::string(op) + ": operands recorded on different tapes");
  }
  return tp;
}

}  // namespace detail

}  // namespace gridcast
