// Copyright (c) the VRC Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef VRC_AUTODIFF_HPP_
#define VRC_AUTODIFF_HPP_

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vrc/tensor.hpp"

namespace vrc {

// Reverse-mode differentiation over a closed op set. Ops build a DAG of
// shared_ptr nodes; backward() topologically sorts from the root and replays
// stored closures. Nodes whose inputs do not require gradients keep neither
// parents nor a closure, so inference graphs stay flat and cheap.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor<T>& ensure_grad() {
    if (grad.size() != value.size()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <typename T>
class Var {
 public:
  Var() = default;

  static Var leaf(Tensor<T> value, bool requires_grad) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }

  bool valid() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& grad() const { return node_->ensure_grad(); }
  bool requires_grad() const { return node_->requires_grad; }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

  explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<Node<T>> node_;
};

// Builds an op node. `bw` runs with the node's own grad populated and must
// accumulate (+=) into each requiring parent's ensure_grad().
template <typename T, class F>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents, F bw) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  n->requires_grad = rg;
  if (rg) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(bw);
  }
  return Var<T>(std::move(n));
}

// Accumulates d(root)/d(leaf) into every reachable grad-requiring node.
// The root must be a scalar.
template <typename T>
void backward(const Var<T>& root) {
  VRC_CHECK_MSG(root.value().size() == 1, "backward root must be scalar");
  if (!root.requires_grad()) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<T>* p = node->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad()[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(*n);
  }
}

namespace detail {
template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  VRC_CHECK(dst.size() == src.size());
  T* d = dst.data();
  const T* s = src.data();
  for (int64_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}
}  // namespace detail

}  // namespace vrc

#endif  // VRC_AUTODIFF_HPP_
