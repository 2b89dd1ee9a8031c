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

#include "mixrep/ops.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "mixrep/errors.h"

namespace mixrep {
namespace {

template <typename Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MapMat = Eigen::Map<RowMat<Real>>;
template <typename Real>
using ConstMapMat = Eigen::Map<const RowMat<Real>>;

template <typename Real>
using NodeT = detail::Node<Real>;

template <typename Real>
bool wants_grad(const NodeT<Real>& self, std::size_t input) {
  return self.inputs[input]->requiresGrad;
}

template <typename Real>
std::vector<Real>& input_grad(NodeT<Real>& self, std::size_t input) {
  return self.inputs[input]->ensure_grad();
}

template <typename Real>
const std::vector<Real>& input_data(const NodeT<Real>& self, std::size_t input) {
  return self.inputs[input]->data;
}

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       shape_string(a) + " and " + shape_string(b));
}

// Offset into b for every element of a under the trailing-aligned rule.
std::vector<std::size_t> broadcast_offsets(const Shape& a, const Shape& b) {
  const std::size_t rank = a.size();
  Shape bAligned(rank, 1);
  std::copy(b.begin(), b.end(), bAligned.begin() + (rank - b.size()));
  std::vector<std::size_t> bStride(rank, 0);
  std::size_t stride = 1;
  for (std::size_t i = rank; i-- > 0;) {
    bStride[i] = bAligned[i] == 1 ? 0 : stride;
    stride *= bAligned[i];
  }
  const std::size_t n = shape_numel(a);
  std::vector<std::size_t> offsets(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    offsets[i] = off;
    for (std::size_t ax = rank; ax-- > 0;) {
      if (++idx[ax] < a[ax]) {
        off += bStride[ax];
        break;
      }
      off -= bStride[ax] * (a[ax] - 1);
      idx[ax] = 0;
    }
  }
  return offsets;
}

enum class BroadcastKind { kSame, kSuffix, kGeneral };

BroadcastKind classify_broadcast(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return BroadcastKind::kSame;
  if (b.size() > a.size()) shape_mismatch(op, a, b);
  const std::size_t lead = a.size() - b.size();
  bool suffix = true;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (b[i] == a[lead + i]) continue;
    if (b[i] != 1) shape_mismatch(op, a, b);
    suffix = false;
  }
  return suffix ? BroadcastKind::kSuffix : BroadcastKind::kGeneral;
}

template <typename Real>
Real sigmoid_scalar(Real x) {
  return Real(1) / (Real(1) + std::exp(-x));
}

}  // namespace

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() < 1 || b.rank() != 2 || a.shape().back() != b.dim(0)) {
    shape_mismatch("matmul", a.shape(), b.shape());
  }
  const std::size_t k = b.dim(0), n = b.dim(1);
  const std::size_t m = a.numel() / k;
  Shape outShape = a.shape();
  outShape.back() = n;
  std::vector<Real> out(m * n);
  MapMat<Real>(out.data(), m, n).noalias() =
      ConstMapMat<Real>(a.data().data(), m, k) * ConstMapMat<Real>(b.data().data(), k, n);
  return detail::make_result<Real>(
      std::move(outShape), std::move(out), {a, b}, [m, k, n](NodeT<Real>& self) {
        ConstMapMat<Real> dC(self.grad.data(), m, n);
        if (wants_grad(self, 0)) {
          MapMat<Real>(input_grad(self, 0).data(), m, k).noalias() +=
              dC * ConstMapMat<Real>(input_data(self, 1).data(), k, n).transpose();
        }
        if (wants_grad(self, 1)) {
          MapMat<Real>(input_grad(self, 1).data(), k, n).noalias() +=
              ConstMapMat<Real>(input_data(self, 0).data(), m, k).transpose() * dC;
        }
      });
}

template <typename Real>
Tensor<Real> batched_matmul(const Tensor<Real>& a, const Tensor<Real>& b,
                            bool transposeB) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) {
    shape_mismatch("batched_matmul", a.shape(), b.shape());
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t bk = transposeB ? b.dim(2) : b.dim(1);
  const std::size_t n = transposeB ? b.dim(1) : b.dim(2);
  if (bk != k) shape_mismatch("batched_matmul", a.shape(), b.shape());
  std::vector<Real> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    ConstMapMat<Real> A(a.data().data() + i * m * k, m, k);
    MapMat<Real> C(out.data() + i * m * n, m, n);
    if (transposeB) {
      C.noalias() = A * ConstMapMat<Real>(b.data().data() + i * n * k, n, k).transpose();
    } else {
      C.noalias() = A * ConstMapMat<Real>(b.data().data() + i * k * n, k, n);
    }
  }
  return detail::make_result<Real>(
      {batch, m, n}, std::move(out), {a, b},
      [batch, m, k, n, transposeB](NodeT<Real>& self) {
        const bool ga = wants_grad(self, 0), gb = wants_grad(self, 1);
        Real* dA = ga ? input_grad(self, 0).data() : nullptr;
        Real* dB = gb ? input_grad(self, 1).data() : nullptr;
        const Real* A = input_data(self, 0).data();
        const Real* B = input_data(self, 1).data();
        for (std::size_t i = 0; i < batch; ++i) {
          ConstMapMat<Real> dC(self.grad.data() + i * m * n, m, n);
          ConstMapMat<Real> Ai(A + i * m * k, m, k);
          if (transposeB) {
            ConstMapMat<Real> Bi(B + i * n * k, n, k);
            if (ga) MapMat<Real>(dA + i * m * k, m, k).noalias() += dC * Bi;
            if (gb) MapMat<Real>(dB + i * n * k, n, k).noalias() += dC.transpose() * Ai;
          } else {
            ConstMapMat<Real> Bi(B + i * k * n, k, n);
            if (ga) MapMat<Real>(dA + i * m * k, m, k).noalias() += dC * Bi.transpose();
            if (gb) MapMat<Real>(dB + i * k * n, k, n).noalias() += Ai.transpose() * dC;
          }
        }
      });
}

template <typename Real>
Tensor<Real> elementwise(Elementwise kind, const Tensor<Real>& a,
                         const Tensor<Real>& b) {
  const BroadcastKind bk = classify_broadcast("elementwise", a.shape(), b.shape());
  const std::size_t n = a.numel();
  const std::size_t bn = b.numel();
  std::vector<std::size_t> offsets;
  if (bk == BroadcastKind::kGeneral) offsets = broadcast_offsets(a.shape(), b.shape());
  auto boff = [bk, bn, &offsets](std::size_t i) -> std::size_t {
    switch (bk) {
      case BroadcastKind::kSame: return i;
      case BroadcastKind::kSuffix: return i % bn;
      default: return offsets[i];
    }
  };

  const Real* A = a.data().data();
  const Real* B = b.data().data();
  std::vector<Real> out(n);
  switch (kind) {
    case Elementwise::kAdd:
      for (std::size_t i = 0; i < n; ++i) out[i] = A[i] + B[boff(i)];
      break;
    case Elementwise::kSub:
      for (std::size_t i = 0; i < n; ++i) out[i] = A[i] - B[boff(i)];
      break;
    case Elementwise::kMul:
      for (std::size_t i = 0; i < n; ++i) out[i] = A[i] * B[boff(i)];
      break;
  }
  return detail::make_result<Real>(
      a.shape(), std::move(out), {a, b},
      [kind, bk, bn, n, offsets = std::move(offsets)](NodeT<Real>& self) {
        auto boff = [&](std::size_t i) -> std::size_t {
          switch (bk) {
            case BroadcastKind::kSame: return i;
            case BroadcastKind::kSuffix: return i % bn;
            default: return offsets[i];
          }
        };
        const Real* g = self.grad.data();
        if (wants_grad(self, 0)) {
          Real* dA = input_grad(self, 0).data();
          if (kind == Elementwise::kMul) {
            const Real* B = input_data(self, 1).data();
            for (std::size_t i = 0; i < n; ++i) dA[i] += g[i] * B[boff(i)];
          } else {
            for (std::size_t i = 0; i < n; ++i) dA[i] += g[i];
          }
        }
        if (wants_grad(self, 1)) {
          Real* dB = input_grad(self, 1).data();
          if (kind == Elementwise::kMul) {
            const Real* A = input_data(self, 0).data();
            for (std::size_t i = 0; i < n; ++i) dB[boff(i)] += g[i] * A[i];
          } else if (kind == Elementwise::kSub) {
            for (std::size_t i = 0; i < n; ++i) dB[boff(i)] -= g[i];
          } else {
            for (std::size_t i = 0; i < n; ++i) dB[boff(i)] += g[i];
          }
        }
      });
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor) {
  std::vector<Real> out(a.data().begin(), a.data().end());
  for (Real& v : out) v *= factor;
  return detail::make_result<Real>(a.shape(), std::move(out), {a},
                                   [factor](NodeT<Real>& self) {
                                     auto& dA = input_grad(self, 0);
                                     for (std::size_t i = 0; i < dA.size(); ++i) {
                                       dA[i] += self.grad[i] * factor;
                                     }
                                   });
}

template <typename Real>
Tensor<Real> log_softmax(const Tensor<Real>& x) {
  if (x.rank() < 1 || x.shape().back() < 1) {
    throw DimensionError("log_softmax: empty last axis in " + shape_string(x.shape()));
  }
  const std::size_t v = x.shape().back();
  const std::size_t rows = x.numel() / v;
  const Real* X = x.data().data();
  std::vector<Real> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = X + r * v;
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < v; ++j) {
      if (!std::isfinite(in[j])) {
        throw NumericError("log_softmax: non-finite input at row " + std::to_string(r));
      }
      mx = std::max(mx, in[j]);
    }
    Real s = 0;
    for (std::size_t j = 0; j < v; ++j) s += std::exp(in[j] - mx);
    const Real lse = mx + std::log(s);
    for (std::size_t j = 0; j < v; ++j) out[r * v + j] = in[j] - lse;
  }
  return detail::make_result<Real>(x.shape(), std::move(out), {x},
                                   [rows, v](NodeT<Real>& self) {
                                     auto& dX = input_grad(self, 0);
                                     for (std::size_t r = 0; r < rows; ++r) {
                                       const Real* g = self.grad.data() + r * v;
                                       const Real* y = self.data.data() + r * v;
                                       Real gs = 0;
                                       for (std::size_t j = 0; j < v; ++j) gs += g[j];
                                       for (std::size_t j = 0; j < v; ++j) {
                                         dX[r * v + j] += g[j] - std::exp(y[j]) * gs;
                                       }
                                     }
                                   });
}

template <typename Real>
Tensor<Real> attention_softmax(const Tensor<Real>& scores,
                               std::span<const std::size_t> keyLengths,
                               bool causal) {
  if (scores.rank() != 3 || keyLengths.size() != scores.dim(0)) {
    throw DimensionError("attention_softmax: scores " + shape_string(scores.shape()) +
                         " with " + std::to_string(keyLengths.size()) + " key lengths");
  }
  const std::size_t batch = scores.dim(0), tq = scores.dim(1), tk = scores.dim(2);
  std::vector<std::size_t> limits(batch * tq);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t q = 0; q < tq; ++q) {
      std::size_t lim = std::min(keyLengths[n], tk);
      if (causal) lim = std::min(lim, q + 1);
      limits[n * tq + q] = lim;
    }
  }
  const Real* S = scores.data().data();
  std::vector<Real> out(scores.numel(), Real(0));
  for (std::size_t r = 0; r < batch * tq; ++r) {
    const std::size_t lim = limits[r];
    if (lim == 0) continue;
    const Real* in = S + r * tk;
    Real* o = out.data() + r * tk;
    Real mx = in[0];
    for (std::size_t j = 1; j < lim; ++j) mx = std::max(mx, in[j]);
    Real s = 0;
    for (std::size_t j = 0; j < lim; ++j) {
      o[j] = std::exp(in[j] - mx);
      s += o[j];
    }
    const Real inv = Real(1) / s;
    for (std::size_t j = 0; j < lim; ++j) o[j] *= inv;
  }
  return detail::make_result<Real>(
      scores.shape(), std::move(out), {scores},
      [tk, limits = std::move(limits)](NodeT<Real>& self) {
        auto& dS = input_grad(self, 0);
        for (std::size_t r = 0; r < limits.size(); ++r) {
          const Real* p = self.data.data() + r * tk;
          const Real* g = self.grad.data() + r * tk;
          Real dot = 0;
          for (std::size_t j = 0; j < limits[r]; ++j) dot += p[j] * g[j];
          for (std::size_t j = 0; j < limits[r]; ++j) {
            dS[r * tk + j] += p[j] * (g[j] - dot);
          }
        }
      });
}

template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gamma,
                        const Tensor<Real>& beta, Real eps) {
  if (x.rank() < 1 || x.shape().back() < 1 || gamma.numel() != x.shape().back() ||
      beta.numel() != x.shape().back()) {
    shape_mismatch("layer_norm", x.shape(), gamma.shape());
  }
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  const Real* X = x.data().data();
  const Real* G = gamma.data().data();
  const Real* Bt = beta.data().data();
  std::vector<Real> out(x.numel());
  // Saved for backward: normalized values and per-row inverse std.
  std::vector<Real> xhat(x.numel());
  std::vector<Real> invStd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = X + r * d;
    Real mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= Real(d);
    Real var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= Real(d);
    const Real inv = Real(1) / std::sqrt(var + eps);
    invStd[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const Real h = (in[j] - mu) * inv;
      xhat[r * d + j] = h;
      out[r * d + j] = h * G[j] + Bt[j];
    }
  }
  return detail::make_result<Real>(
      x.shape(), std::move(out), {x, gamma, beta},
      [rows, d, xhat = std::move(xhat), invStd = std::move(invStd)](NodeT<Real>& self) {
        const Real* g = self.grad.data();
        const Real* G = input_data(self, 1).data();
        if (wants_grad(self, 0)) {
          auto& dX = input_grad(self, 0);
          for (std::size_t r = 0; r < rows; ++r) {
            Real sumDh = 0, sumDhX = 0;
            for (std::size_t j = 0; j < d; ++j) {
              const Real dh = g[r * d + j] * G[j];
              sumDh += dh;
              sumDhX += dh * xhat[r * d + j];
            }
            const Real c = invStd[r] / Real(d);
            for (std::size_t j = 0; j < d; ++j) {
              const Real dh = g[r * d + j] * G[j];
              dX[r * d + j] += c * (Real(d) * dh - sumDh - xhat[r * d + j] * sumDhX);
            }
          }
        }
        if (wants_grad(self, 1)) {
          auto& dG = input_grad(self, 1);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) dG[j] += g[r * d + j] * xhat[r * d + j];
          }
        }
        if (wants_grad(self, 2)) {
          auto& dB = input_grad(self, 2);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) dB[j] += g[r * d + j];
          }
        }
      });
}

template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& x, const Tensor<Real>& kernel,
                    std::size_t stride, std::size_t padH, std::size_t padW) {
  if (x.rank() != 4 || kernel.rank() != 4 || x.dim(3) != kernel.dim(3) || stride == 0) {
    shape_mismatch("conv2d", x.shape(), kernel.shape());
  }
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const std::size_t O = kernel.dim(0), KH = kernel.dim(1), KW = kernel.dim(2);
  if (KH > H + 2 * padH || KW > W + 2 * padW) {
    throw DimensionError("conv2d: kernel " + shape_string(kernel.shape()) +
                         " larger than padded input " + shape_string(x.shape()));
  }
  const std::size_t OH = (H + 2 * padH - KH) / stride + 1;
  const std::size_t OW = (W + 2 * padW - KW) / stride + 1;
  const std::size_t P = KH * KW * C;
  const std::size_t rowsOut = B * OH * OW;

  // im2col; -1 marks a zero-padding tap.
  std::vector<std::ptrdiff_t> src(rowsOut * KH * KW);
  std::vector<Real> cols(rowsOut * P, Real(0));
  const Real* X = x.data().data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t oh = 0; oh < OH; ++oh) {
      for (std::size_t ow = 0; ow < OW; ++ow) {
        const std::size_t row = (b * OH + oh) * OW + ow;
        for (std::size_t i = 0; i < KH; ++i) {
          const std::ptrdiff_t h = std::ptrdiff_t(oh * stride + i) - std::ptrdiff_t(padH);
          for (std::size_t j = 0; j < KW; ++j) {
            const std::ptrdiff_t w = std::ptrdiff_t(ow * stride + j) - std::ptrdiff_t(padW);
            const std::size_t tap = row * KH * KW + i * KW + j;
            if (h < 0 || w < 0 || h >= std::ptrdiff_t(H) || w >= std::ptrdiff_t(W)) {
              src[tap] = -1;
              continue;
            }
            const std::size_t base = ((b * H + std::size_t(h)) * W + std::size_t(w)) * C;
            src[tap] = std::ptrdiff_t(base);
            std::copy_n(X + base, C, cols.data() + row * P + (i * KW + j) * C);
          }
        }
      }
    }
  }
  std::vector<Real> out(rowsOut * O);
  MapMat<Real>(out.data(), rowsOut, O).noalias() =
      ConstMapMat<Real>(cols.data(), rowsOut, P) *
      ConstMapMat<Real>(kernel.data().data(), O, P).transpose();
  return detail::make_result<Real>(
      {B, OH, OW, O}, std::move(out), {x, kernel},
      [rowsOut, P, O, C, KH, KW, cols = std::move(cols), src = std::move(src)](
          NodeT<Real>& self) {
        ConstMapMat<Real> dOut(self.grad.data(), rowsOut, O);
        if (wants_grad(self, 1)) {
          MapMat<Real>(input_grad(self, 1).data(), O, P).noalias() +=
              dOut.transpose() * ConstMapMat<Real>(cols.data(), rowsOut, P);
        }
        if (wants_grad(self, 0)) {
          RowMat<Real> dCols = dOut * ConstMapMat<Real>(input_data(self, 1).data(), O, P);
          Real* dX = input_grad(self, 0).data();
          for (std::size_t row = 0; row < rowsOut; ++row) {
            for (std::size_t t = 0; t < KH * KW; ++t) {
              const std::ptrdiff_t base = src[row * KH * KW + t];
              if (base < 0) continue;
              const Real* g = dCols.data() + row * P + t * C;
              for (std::size_t c = 0; c < C; ++c) dX[std::size_t(base) + c] += g[c];
            }
          }
        }
      });
}

template <typename Real>
Tensor<Real> depthwise_conv1d(const Tensor<Real>& x, const Tensor<Real>& kernel,
                              std::size_t padding) {
  if (x.rank() != 3 || kernel.rank() != 2 || kernel.dim(0) != x.dim(2)) {
    shape_mismatch("depthwise_conv1d", x.shape(), kernel.shape());
  }
  const std::size_t B = x.dim(0), T = x.dim(1), C = x.dim(2), K = kernel.dim(1);
  if (K > T + 2 * padding) {
    throw DimensionError("depthwise_conv1d: kernel " + shape_string(kernel.shape()) +
                         " larger than padded input " + shape_string(x.shape()));
  }
  const std::size_t OT = T + 2 * padding - K + 1;
  const Real* X = x.data().data();
  const Real* Kd = kernel.data().data();
  std::vector<Real> out(B * OT * C, Real(0));
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < OT; ++t) {
      Real* o = out.data() + (b * OT + t) * C;
      for (std::size_t j = 0; j < K; ++j) {
        const std::ptrdiff_t s = std::ptrdiff_t(t + j) - std::ptrdiff_t(padding);
        if (s < 0 || s >= std::ptrdiff_t(T)) continue;
        const Real* in = X + (b * T + std::size_t(s)) * C;
        for (std::size_t c = 0; c < C; ++c) o[c] += in[c] * Kd[c * K + j];
      }
    }
  }
  return detail::make_result<Real>(
      {B, OT, C}, std::move(out), {x, kernel},
      [B, T, C, K, OT, padding](NodeT<Real>& self) {
        const bool gx = wants_grad(self, 0), gk = wants_grad(self, 1);
        Real* dX = gx ? input_grad(self, 0).data() : nullptr;
        Real* dK = gk ? input_grad(self, 1).data() : nullptr;
        const Real* X = input_data(self, 0).data();
        const Real* Kd = input_data(self, 1).data();
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t t = 0; t < OT; ++t) {
            const Real* g = self.grad.data() + (b * OT + t) * C;
            for (std::size_t j = 0; j < K; ++j) {
              const std::ptrdiff_t s = std::ptrdiff_t(t + j) - std::ptrdiff_t(padding);
              if (s < 0 || s >= std::ptrdiff_t(T)) continue;
              const std::size_t base = (b * T + std::size_t(s)) * C;
              for (std::size_t c = 0; c < C; ++c) {
                if (gx) dX[base + c] += g[c] * Kd[c * K + j];
                if (gk) dK[c * K + j] += g[c] * X[base + c];
              }
            }
          }
        }
      });
}

template <typename Real>
Tensor<Real> activation(Activation kind, const Tensor<Real>& x) {
  const Real* X = x.data().data();
  const std::size_t n = x.numel();
  std::vector<Real> out(n);
  switch (kind) {
    case Activation::kRelu:
      for (std::size_t i = 0; i < n; ++i) out[i] = X[i] > Real(0) ? X[i] : Real(0);
      break;
    case Activation::kSwish:
      for (std::size_t i = 0; i < n; ++i) out[i] = X[i] * sigmoid_scalar(X[i]);
      break;
    case Activation::kSigmoid:
      for (std::size_t i = 0; i < n; ++i) out[i] = sigmoid_scalar(X[i]);
      break;
  }
  return detail::make_result<Real>(x.shape(), std::move(out), {x},
                                   [kind, n](NodeT<Real>& self) {
    auto& dX = input_grad(self, 0);
    const Real* X = input_data(self, 0).data();
    const Real* g = self.grad.data();
    switch (kind) {
      case Activation::kRelu:
        for (std::size_t i = 0; i < n; ++i) {
          if (X[i] > Real(0)) dX[i] += g[i];
        }
        break;
      case Activation::kSwish:
        for (std::size_t i = 0; i < n; ++i) {
          const Real s = sigmoid_scalar(X[i]);
          dX[i] += g[i] * (s + X[i] * s * (Real(1) - s));
        }
        break;
      case Activation::kSigmoid:
        for (std::size_t i = 0; i < n; ++i) {
          const Real s = self.data[i];
          dX[i] += g[i] * s * (Real(1) - s);
        }
        break;
    }
  });
}

template <typename Real>
Tensor<Real> glu(const Tensor<Real>& x) {
  if (x.rank() < 1 || x.shape().back() % 2 != 0) {
    throw DimensionError("glu: last axis must be even, got " + shape_string(x.shape()));
  }
  const std::size_t two = x.shape().back(), half = two / 2;
  const std::size_t rows = x.numel() / two;
  Shape outShape = x.shape();
  outShape.back() = half;
  const Real* X = x.data().data();
  std::vector<Real> out(rows * half);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < half; ++j) {
      out[r * half + j] = X[r * two + j] * sigmoid_scalar(X[r * two + half + j]);
    }
  }
  return detail::make_result<Real>(std::move(outShape), std::move(out), {x},
                                   [rows, half, two](NodeT<Real>& self) {
    auto& dX = input_grad(self, 0);
    const Real* X = input_data(self, 0).data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < half; ++j) {
        const Real g = self.grad[r * half + j];
        const Real a = X[r * two + j];
        const Real s = sigmoid_scalar(X[r * two + half + j]);
        dX[r * two + j] += g * s;
        dX[r * two + half + j] += g * a * s * (Real(1) - s);
      }
    }
  });
}

template <typename Real>
Tensor<Real> dropout(const Tensor<Real>& x, double p, bool training, RngStream& rng) {
  if (p < 0.0 || p >= 1.0) {
    throw ParameterError("dropout probability must lie in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) return x;
  const Real keepScale = Real(1.0 / (1.0 - p));
  const std::size_t n = x.numel();
  std::vector<Real> mask(n);
  for (std::size_t i = 0; i < n; ++i) mask[i] = rng.uniform() < p ? Real(0) : keepScale;
  std::vector<Real> out(n);
  const Real* X = x.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = X[i] * mask[i];
  return detail::make_result<Real>(x.shape(), std::move(out), {x},
                                   [mask = std::move(mask)](NodeT<Real>& self) {
                                     auto& dX = input_grad(self, 0);
                                     for (std::size_t i = 0; i < mask.size(); ++i) {
                                       dX[i] += self.grad[i] * mask[i];
                                     }
                                   });
}

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) shape_mismatch("reshape", x.shape(), shape);
  std::vector<Real> out(x.data().begin(), x.data().end());
  return detail::make_result<Real>(std::move(shape), std::move(out), {x},
                                   [](NodeT<Real>& self) {
                                     auto& dX = input_grad(self, 0);
                                     for (std::size_t i = 0; i < dX.size(); ++i) {
                                       dX[i] += self.grad[i];
                                     }
                                   });
}

template <typename Real>
Tensor<Real> swap_middle_axes(const Tensor<Real>& x) {
  if (x.rank() != 4) throw DimensionError("swap_middle_axes expects rank 4, got " + shape_string(x.shape()));
  const std::size_t A = x.dim(0), B = x.dim(1), C = x.dim(2), D = x.dim(3);
  const Real* X = x.data().data();
  std::vector<Real> out(x.numel());
  for (std::size_t a = 0; a < A; ++a) {
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t c = 0; c < C; ++c) {
        std::copy_n(X + ((a * B + b) * C + c) * D, D, out.data() + ((a * C + c) * B + b) * D);
      }
    }
  }
  return detail::make_result<Real>({A, C, B, D}, std::move(out), {x},
                                   [A, B, C, D](NodeT<Real>& self) {
    auto& dX = input_grad(self, 0);
    for (std::size_t a = 0; a < A; ++a) {
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < C; ++c) {
          const Real* g = self.grad.data() + ((a * C + c) * B + b) * D;
          Real* d = dX.data() + ((a * B + b) * C + c) * D;
          for (std::size_t i = 0; i < D; ++i) d[i] += g[i];
        }
      }
    }
  });
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  Real s = 0;
  for (Real v : x.data()) s += v;
  return detail::make_result<Real>({}, {s}, {x}, [](NodeT<Real>& self) {
    auto& dX = input_grad(self, 0);
    const Real g = self.grad[0];
    for (Real& d : dX) d += g;
  });
}

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x) {
  if (x.numel() == 0) throw MetricError("mean of an empty tensor");
  return scale(sum(x), Real(1) / Real(x.numel()));
}

template <typename Real>
Tensor<Real> embedding(const Tensor<Real>& table, std::span<const int> ids, Shape leading) {
  if (table.rank() != 2 || shape_numel(leading) != ids.size()) {
    throw DimensionError("embedding: table " + shape_string(table.shape()) + " with " +
                         std::to_string(ids.size()) + " ids for leading shape " +
                         shape_string(leading));
  }
  const std::size_t V = table.dim(0), d = table.dim(1);
  std::vector<int> idCopy(ids.begin(), ids.end());
  std::vector<Real> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || std::size_t(ids[i]) >= V) {
      throw DimensionError("embedding: id " + std::to_string(ids[i]) + " outside vocabulary of " +
                           std::to_string(V));
    }
    std::copy_n(table.data().data() + std::size_t(ids[i]) * d, d, out.data() + i * d);
  }
  leading.push_back(d);
  return detail::make_result<Real>(std::move(leading), std::move(out), {table},
                                   [d, idCopy = std::move(idCopy)](NodeT<Real>& self) {
    auto& dT = input_grad(self, 0);
    for (std::size_t i = 0; i < idCopy.size(); ++i) {
      const Real* g = self.grad.data() + i * d;
      Real* t = dT.data() + std::size_t(idCopy[i]) * d;
      for (std::size_t j = 0; j < d; ++j) t[j] += g[j];
    }
  });
}

template <typename Real>
Tensor<Real> index_select_rows(const Tensor<Real>& x, std::span<const std::size_t> indices) {
  if (x.rank() < 1) throw DimensionError("index_select_rows on a scalar");
  const std::size_t rows = x.dim(0);
  const std::size_t block = rows ? x.numel() / rows : 0;
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<Real> out(idx.size() * block);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows) {
      throw DimensionError("index_select_rows: index " + std::to_string(idx[i]) +
                           " out of range for " + shape_string(x.shape()));
    }
    std::copy_n(x.data().data() + idx[i] * block, block, out.data() + i * block);
  }
  Shape outShape = x.shape();
  outShape[0] = idx.size();
  return detail::make_result<Real>(std::move(outShape), std::move(out), {x},
                                   [block, idx = std::move(idx)](NodeT<Real>& self) {
    auto& dX = input_grad(self, 0);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const Real* g = self.grad.data() + i * block;
      Real* d = dX.data() + idx[i] * block;
      for (std::size_t j = 0; j < block; ++j) d[j] += g[j];
    }
  });
}

template <typename Real>
Tensor<Real> mask_padding(const Tensor<Real>& x, std::span<const std::size_t> lengths) {
  if (x.rank() < 2 || lengths.size() != x.dim(0)) {
    throw DimensionError("mask_padding: " + std::to_string(lengths.size()) +
                         " lengths for shape " + shape_string(x.shape()));
  }
  const std::size_t B = x.dim(0), T = x.dim(1);
  const std::size_t inner = x.numel() / (B * T);
  std::vector<std::size_t> lens(lengths.begin(), lengths.end());
  std::vector<Real> out(x.data().begin(), x.data().end());
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t from = std::min(lens[b], T);
    std::fill(out.begin() + (b * T + from) * inner, out.begin() + (b + 1) * T * inner, Real(0));
  }
  return detail::make_result<Real>(x.shape(), std::move(out), {x},
                                   [B, T, inner, lens = std::move(lens)](NodeT<Real>& self) {
    auto& dX = input_grad(self, 0);
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t valid = std::min(lens[b], T) * inner;
      const Real* g = self.grad.data() + b * T * inner;
      Real* d = dX.data() + b * T * inner;
      for (std::size_t i = 0; i < valid; ++i) d[i] += g[i];
    }
  });
}

#define MIXREP_INSTANTIATE_OPS(Real)                                                      \
  template Tensor<Real> matmul(const Tensor<Real>&, const Tensor<Real>&);                 \
  template Tensor<Real> batched_matmul(const Tensor<Real>&, const Tensor<Real>&, bool);   \
  template Tensor<Real> elementwise(Elementwise, const Tensor<Real>&, const Tensor<Real>&); \
  template Tensor<Real> scale(const Tensor<Real>&, Real);                                 \
  template Tensor<Real> log_softmax(const Tensor<Real>&);                                 \
  template Tensor<Real> attention_softmax(const Tensor<Real>&, std::span<const std::size_t>, \
                                          bool);                                          \
  template Tensor<Real> layer_norm(const Tensor<Real>&, const Tensor<Real>&,              \
                                   const Tensor<Real>&, Real);                            \
  template Tensor<Real> conv2d(const Tensor<Real>&, const Tensor<Real>&, std::size_t,     \
                               std::size_t, std::size_t);                                 \
  template Tensor<Real> depthwise_conv1d(const Tensor<Real>&, const Tensor<Real>&,        \
                                         std::size_t);                                    \
  template Tensor<Real> activation(Activation, const Tensor<Real>&);                      \
  template Tensor<Real> glu(const Tensor<Real>&);                                         \
  template Tensor<Real> dropout(const Tensor<Real>&, double, bool, RngStream&);           \
  template Tensor<Real> reshape(const Tensor<Real>&, Shape);                              \
  template Tensor<Real> swap_middle_axes(const Tensor<Real>&);                            \
  template Tensor<Real> sum(const Tensor<Real>&);                                         \
  template Tensor<Real> mean(const Tensor<Real>&);                                        \
  template Tensor<Real> embedding(const Tensor<Real>&, std::span<const int>, Shape);      \
  template Tensor<Real> index_select_rows(const Tensor<Real>&,                            \
                                          std::span<const std::size_t>);                  \
  template Tensor<Real> mask_padding(const Tensor<Real>&, std::span<const std::size_t>);

MIXREP_INSTANTIATE_OPS(float)
MIXREP_INSTANTIATE_OPS(double)

#undef MIXREP_INSTANTIATE_OPS

}  // namespace mixrep
