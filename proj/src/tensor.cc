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

#include "mixrep/tensor.h"

#include <sstream>
#include <unordered_set>

#include "mixrep/errors.h"

namespace mixrep {
namespace {

thread_local bool gGradEnabled = true;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

NoGradGuard::NoGradGuard() : previous_(gGradEnabled) { gGradEnabled = false; }
NoGradGuard::~NoGradGuard() { gGradEnabled = previous_; }
bool NoGradGuard::grad_enabled() { return gGradEnabled; }

template <typename Real>
Tensor<Real> Tensor<Real>::zeros(Shape shape, bool requiresGrad) {
  return full(std::move(shape), Real(0), requiresGrad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::full(Shape shape, Real value, bool requiresGrad) {
  auto node = std::make_shared<NodeT>();
  node->data.assign(shape_numel(shape), value);
  node->shape = std::move(shape);
  node->requiresGrad = requiresGrad;
  return Tensor(std::move(node));
}

template <typename Real>
Tensor<Real> Tensor<Real>::from(Shape shape, std::vector<Real> values,
                                bool requiresGrad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_string(shape) + " holds " +
                         std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  }
  auto node = std::make_shared<NodeT>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requiresGrad = requiresGrad;
  return Tensor(std::move(node));
}

template <typename Real>
Tensor<Real> Tensor<Real>::scalar(Real value, bool requiresGrad) {
  return from({}, {value}, requiresGrad);
}

template <typename Real>
void Tensor<Real>::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), Real(0));
}

template <typename Real>
Real Tensor<Real>::item() const {
  if (numel() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  }
  return node_->data[0];
}

template <typename Real>
Real Tensor<Real>::at(std::initializer_list<std::size_t> index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) {
    throw DimensionError("index rank mismatch for shape " + shape_string(s));
  }
  std::size_t offset = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= s[axis]) throw DimensionError("index out of range for shape " + shape_string(s));
    offset = offset * s[axis] + i;
    ++axis;
  }
  return node_->data[offset];
}

template <typename Real>
void Tensor<Real>::backward() const {
  if (numel() != 1) {
    throw UsageError("backward() requires a scalar root, got shape " +
                     shape_string(shape()));
  }
  if (!node_->requiresGrad) return;

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> visited;
  std::vector<std::pair<NodeT*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodeT* child = node->inputs[next++].get();
      if (child->requiresGrad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (NodeT* node : order) {
    if (!node->is_leaf()) node->grad.assign(node->data.size(), Real(0));
  }
  node_->ensure_grad()[0] += Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* node = *it;
    if (!node->is_leaf()) node->backwardFn(*node);
  }
}

template <typename Real>
Tensor<Real> Tensor<Real>::detach() const {
  return from(shape(), node_->data, false);
}

template <typename Real>
Tensor<Real> Tensor<Real>::clone() const {
  return from(shape(), node_->data, node_->requiresGrad);
}

namespace detail {

template <typename Real>
Tensor<Real> make_result(Shape shape, std::vector<Real> data,
                         std::vector<Tensor<Real>> inputs,
                         std::function<void(Node<Real>&)> backwardFn) {
  auto node = std::make_shared<Node<Real>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool track = false;
  if (NoGradGuard::grad_enabled()) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) {
        track = true;
        break;
      }
    }
  }
  if (track) {
    node->requiresGrad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node_ptr());
    node->backwardFn = std::move(backwardFn);
  }
  return Tensor<Real>(std::move(node));
}

template Tensor<float> make_result(Shape, std::vector<float>,
                                   std::vector<Tensor<float>>,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>,
                                    std::vector<Tensor<double>>,
                                    std::function<void(Node<double>&)>);

}  // namespace detail

template class Tensor<float>;
template class Tensor<double>;

}  // namespace mixrep
