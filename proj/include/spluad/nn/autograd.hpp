#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "spluad/core/tensor.hpp"

namespace spluad::nn {

// One value on the reverse-mode tape. Nodes that do not require a gradient
// keep no parents and no backward closure, so frozen subgraphs cost nothing
// at backward time.
struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::string op = "leaf";
  std::string name;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  bool has_grad() const noexcept { return !grad.empty(); }

  Tensor& grad_buffer() {
    if (grad.empty()) grad = Tensor(value.shape());
    return grad;
  }

  void accumulate(std::span<const double> g) {
    auto& buf = grad_buffer().values();
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
  }
};

namespace detail {
inline thread_local bool grad_enabled = true;
}

inline bool grad_enabled() noexcept { return detail::grad_enabled; }

// Disables tape recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(std::move(n));
  }

  static Var parameter(Tensor value, std::string name = {}) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    n->name = std::move(name);
    return Var(std::move(n));
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  const std::string& name() const { return node_->name; }

  // Zero tensor of the value's shape when nothing has been accumulated.
  Tensor grad() const {
    return node_->has_grad() ? node_->grad : Tensor(node_->value.shape());
  }
  bool has_grad() const { return node_->has_grad(); }
  void zero_grad() { node_->grad = Tensor(); }

  Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Builds an op result. The backward closure is kept only when recording is
// enabled and some input needs a gradient.
inline Var make_result(Tensor value, std::string op, const std::vector<Var>& inputs,
                       std::function<void(Node&)> backward) {
  if (!value.all_finite())
    fail(ErrorCode::numeric, "non-finite value produced by op '" + op + "'");
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = std::move(op);
  if (grad_enabled()) {
    for (const auto& in : inputs)
      if (in.requires_grad()) n->requires_grad = true;
    if (n->requires_grad) {
      n->parents.reserve(inputs.size());
      for (const auto& in : inputs) n->parents.push_back(in.node_ptr());
      n->backward = std::move(backward);
    }
  }
  return Var(std::move(n));
}

inline std::vector<Node*> topological_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

// Reverse-mode sweep from a scalar root. Leaf gradients accumulate; interior
// gradients are released once propagated.
inline void backward(const Var& root) {
  require(root.value().size() == 1, ErrorCode::dimension,
          "backward() needs a scalar root, got " + shape_string(root.shape()));
  if (!root.requires_grad()) return;
  auto order = topological_order(root.node());
  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->has_grad()) {
      n->backward(*n);
      n->grad = Tensor();
    }
  }
}

// True when `target` is reachable from `root` through recorded parents.
inline bool depends_on(const Var& root, const Var& target) {
  std::unordered_set<const Node*> seen;
  std::vector<const Node*> stack{root.node()};
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    if (n == target.node()) return true;
    if (!seen.insert(n).second) continue;
    for (const auto& p : n->parents) stack.push_back(p.get());
  }
  return false;
}

}  // namespace spluad::nn
