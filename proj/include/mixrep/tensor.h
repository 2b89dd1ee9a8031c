// Copyright 2026 The MixRep Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MIXREP_TENSOR_H_
#define MIXREP_TENSOR_H_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mixrep {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

template <typename Real>
struct Node {
  Shape shape;
  std::vector<Real> data;
  // Empty until a backward pass reaches this node.
  std::vector<Real> grad;
  bool requiresGrad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backwardFn;

  bool is_leaf() const { return !backwardFn; }
  std::vector<Real>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), Real(0));
    return grad;
  }
};

}  // namespace detail

// Ops skip graph recording while a guard is alive on this thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool grad_enabled();

 private:
  bool previous_;
};

// Dense row-major array with reverse-mode gradient tracking. Copies share
// the underlying node; use clone() for a detached deep copy.
template <typename Real>
class Tensor {
 public:
  using NodeT = detail::Node<Real>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<NodeT> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requiresGrad = false);
  static Tensor full(Shape shape, Real value, bool requiresGrad = false);
  static Tensor from(Shape shape, std::vector<Real> values,
                     bool requiresGrad = false);
  static Tensor scalar(Real value, bool requiresGrad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const Real> data() const { return node_->data; }
  // Writes bypass the graph; only valid on leaves or untracked tensors.
  std::span<Real> mutable_data() { return node_->data; }
  const std::vector<Real>& values() const { return node_->data; }

  bool requires_grad() const { return node_->requiresGrad; }
  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  std::span<const Real> grad() const { return node_->grad; }
  std::span<Real> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();

  Real item() const;
  Real at(std::initializer_list<std::size_t> index) const;

  // Populates grad on every tracked ancestor. Leaf gradients accumulate
  // across calls; intermediate gradients are recomputed per call.
  void backward() const;

  Tensor detach() const;
  Tensor clone() const;

  NodeT& node() const { return *node_; }
  const std::shared_ptr<NodeT>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<NodeT> node_;
};

namespace detail {

// Builds an op result. The backward closure is only retained when grad
// mode is on and some input requires grad.
template <typename Real>
Tensor<Real> make_result(Shape shape, std::vector<Real> data,
                         std::vector<Tensor<Real>> inputs,
                         std::function<void(Node<Real>&)> backwardFn);

}  // namespace detail

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace mixrep

#endif  // MIXREP_TENSOR_H_
