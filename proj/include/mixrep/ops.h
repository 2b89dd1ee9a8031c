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

#ifndef MIXREP_OPS_H_
#define MIXREP_OPS_H_

#include <cstddef>
#include <span>
#include <vector>

#include "mixrep/rng.h"
#include "mixrep/tensor.h"

// Differentiable primitives. Every op records a backward closure when grad
// mode is on and at least one input requires grad.
namespace mixrep {

// a: [..., k], b: [k, n] -> [..., n]. Leading axes of `a` are flattened.
template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);

// a: [N, m, k], b: [N, k, n] (or [N, n, k] with transposeB) -> [N, m, n].
template <typename Real>
Tensor<Real> batched_matmul(const Tensor<Real>& a, const Tensor<Real>& b,
                            bool transposeB = false);

enum class Elementwise { kAdd, kSub, kMul };

// `b` broadcasts into `a`: shapes align on the trailing axes, and a missing
// leading axis or an extent-1 axis of `b` stretches. The result has a's
// shape.
template <typename Real>
Tensor<Real> elementwise(Elementwise kind, const Tensor<Real>& a,
                         const Tensor<Real>& b);

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  return elementwise(Elementwise::kAdd, a, b);
}
template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  return elementwise(Elementwise::kSub, a, b);
}
template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  return elementwise(Elementwise::kMul, a, b);
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor);

template <typename Real>
Tensor<Real> log_softmax(const Tensor<Real>& x);

// Softmax over the last axis of scores [N, Tq, Tk]. Keys at or beyond
// keyLengths[n] and, when causal, keys after the query position get zero
// weight.
template <typename Real>
Tensor<Real> attention_softmax(const Tensor<Real>& scores,
                               std::span<const std::size_t> keyLengths,
                               bool causal);

template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gamma,
                        const Tensor<Real>& beta, Real eps = Real(1e-12));

// Cross-correlation. x: [B, H, W, C], kernel: [O, kh, kw, C] -> [B, OH, OW, O]
// with OH = floor((H + 2 padH - kh) / stride) + 1, likewise for OW.
template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& x, const Tensor<Real>& kernel,
                    std::size_t stride, std::size_t padH, std::size_t padW);

template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& x, const Tensor<Real>& kernel,
                    std::size_t stride, std::size_t padding) {
  return conv2d(x, kernel, stride, padding, padding);
}

// x: [B, T, C], kernel: [C, k] -> [B, T + 2p - k + 1, C].
template <typename Real>
Tensor<Real> depthwise_conv1d(const Tensor<Real>& x, const Tensor<Real>& kernel,
                              std::size_t padding);

enum class Activation { kRelu, kSwish, kSigmoid };

template <typename Real>
Tensor<Real> activation(Activation kind, const Tensor<Real>& x);

template <typename Real>
Tensor<Real> relu(const Tensor<Real>& x) {
  return activation(Activation::kRelu, x);
}
template <typename Real>
Tensor<Real> swish(const Tensor<Real>& x) {
  return activation(Activation::kSwish, x);
}

// Gated linear unit over the last axis: first half * sigmoid(second half).
template <typename Real>
Tensor<Real> glu(const Tensor<Real>& x);

template <typename Real>
Tensor<Real> dropout(const Tensor<Real>& x, double p, bool training,
                     RngStream& rng);

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape);

// [A, B, C, D] -> [A, C, B, D].
template <typename Real>
Tensor<Real> swap_middle_axes(const Tensor<Real>& x);

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x);

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x);

// Row lookup into table [V, d]; result shape is leading + [d].
template <typename Real>
Tensor<Real> embedding(const Tensor<Real>& table, std::span<const int> ids,
                       Shape leading);

// Gathers blocks along axis 0: out[i] = x[indices[i]].
template <typename Real>
Tensor<Real> index_select_rows(const Tensor<Real>& x,
                               std::span<const std::size_t> indices);

// x: [B, T, ...]. Zeroes every position t >= lengths[b].
template <typename Real>
Tensor<Real> mask_padding(const Tensor<Real>& x,
                          std::span<const std::size_t> lengths);

}  // namespace mixrep

#endif  // MIXREP_OPS_H_
