#pragma once

// Reverse-mode automatic differentiation over dense row-major double arrays.
//
// A Tensor is a shared handle to a graph node. Operations that receive at
// least one input requiring a gradient record a node holding its parents and
// a backward closure; Tensor::backward() walks the recorded graph once in
// reverse topological order and then releases it, so every forward/backward
// cycle owns its own tape.

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "topo_snn/error.hpp"

namespace topo {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
  os << ')';
  return os.str();
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient reaches the node
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

inline thread_local int no_grad_depth = 0;

}  // namespace detail

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    if (shape_size(shape) != data.size())
      throw ContractViolation("tensor data length " + std::to_string(data.size()) +
                              " does not match shape " + shape_str(shape));
    for (auto d : shape)
      if (d == 0) throw ContractViolation("tensor shape has zero dimension " + shape_str(shape));
    node_->shape = std::move(shape);
    node_->value = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }
  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    const auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
  }
  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor({1}, {v}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  // Mutable access is meant for leaves (parameters, inputs) between steps.
  std::span<double> mutable_data() { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double item() const {
    TOPO_REQUIRE(size() == 1, "item() on non-scalar tensor " + shape_str(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  // Gradient accumulated by the last backward(); zeros if none reached this tensor.
  std::vector<double> grad() const {
    if (node_->grad.size() == node_->value.size()) return node_->grad;
    return std::vector<double>(node_->value.size(), 0.0);
  }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  void zero_grad() { node_->grad.clear(); }

  // Same values, no history.
  Tensor detach() const { return Tensor(shape(), node_->value, false); }

  const char* op() const { return node_->op; }

  void backward() const;

  // Builds a recorded node. `backward` receives the output node (with its
  // gradient filled) and must accumulate into parents via ensure_grad().
  static Tensor make_result(Shape shape, std::vector<double> value, const char* op,
                            std::vector<Tensor> inputs,
                            std::function<void(detail::Node&)> backward) {
    Tensor out(std::move(shape), std::move(value), false);
    out.node_->op = op;
    if (!grad_enabled()) return out;
    bool any = false;
    for (const auto& in : inputs) any = any || in.node_->requires_grad;
    if (!any) return out;
    out.node_->requires_grad = true;
    out.node_->parents.reserve(inputs.size());
    for (auto& in : inputs) out.node_->parents.push_back(in.node_);
    out.node_->backward = std::move(backward);
    return out;
  }

  detail::Node& node() const { return *node_; }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

inline void Tensor::backward() const {
  if (size() != 1)
    throw ContractViolation("backward() requires a scalar loss, got shape " + shape_str(shape()));
  if (!node_->requires_grad) return;

  // Iterative DFS post-order gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
  }
  // Release the tape; leaves keep their gradients.
  for (detail::Node* n : order) {
    if (!n->parents.empty()) {
      n->parents.clear();
      n->backward = nullptr;
    }
  }
}

}  // namespace topo
