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

#include "mixrep/augment.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mixrep/errors.h"
#include "mixrep/ops.h"

namespace mixrep {

void MixupConfig::validate(int encoderLayers) const {
  if (!(alpha > 0.0)) throw ParameterError("mixup alpha must be > 0");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ParameterError("mixup tau must lie in [0, 1]");
  if (layerSet.empty()) throw ParameterError("mixup layer set must not be empty");
  for (int k : layerSet) {
    if (k < 0 || k > encoderLayers) {
      throw ParameterError("mixup layer " + std::to_string(k) + " outside [0, " +
                           std::to_string(encoderLayers) + "]");
    }
  }
}

double sample_lambda(double alpha, RngStream& rng) {
  if (!(alpha > 0.0)) throw ParameterError("Beta coefficient must be > 0");
  // Beta(a, a) as X / (X + Y) with X, Y ~ Gamma(a).
  const double x = rng.gamma(alpha);
  const double y = rng.gamma(alpha);
  const double s = x + y;
  if (s <= 0.0) return 0.5;
  return std::clamp(x / s, 0.0, 1.0);
}

int sample_layer(std::span<const int> layerSet, RngStream& rng) {
  if (layerSet.empty()) throw ParameterError("cannot sample from an empty layer set");
  return layerSet[std::size_t(rng.uniform_int(0, std::int64_t(layerSet.size()) - 1))];
}

bool decide_apply(double tau, RngStream& rng) {
  if (tau <= 0.0) return false;
  if (tau >= 1.0) return true;
  return rng.bernoulli(tau);
}

std::vector<std::size_t> sample_permutation(std::size_t batchSize, RngStream& rng) {
  std::vector<std::size_t> perm(batchSize);
  std::iota(perm.begin(), perm.end(), 0);
  // Fisher-Yates from the back; fixed points are allowed.
  for (std::size_t i = batchSize; i > 1; --i) {
    const auto j = std::size_t(rng.uniform_int(0, std::int64_t(i) - 1));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

MixPlan sample_plan(const MixupConfig& cfg, std::size_t batchSize, RngStream& rng) {
  MixPlan plan;
  plan.apply = decide_apply(cfg.tau, rng);
  if (plan.apply) {
    plan.lambda = sample_lambda(cfg.alpha, rng);
    plan.layerIndex = sample_layer(cfg.layerSet, rng);
    plan.permutation = sample_permutation(batchSize, rng);
  }
  return plan;
}

void validate_permutation(std::span<const std::size_t> permutation, std::size_t batchSize) {
  if (permutation.size() != batchSize) {
    throw PlanError("permutation has " + std::to_string(permutation.size()) +
                    " entries for batch size " + std::to_string(batchSize));
  }
  std::vector<bool> seen(batchSize, false);
  for (std::size_t p : permutation) {
    if (p >= batchSize || seen[p]) throw PlanError("mixup index array is not a permutation");
    seen[p] = true;
  }
}

std::vector<std::size_t> mixed_lengths(std::span<const std::size_t> lengths,
                                       std::span<const std::size_t> permutation,
                                       double lambda) {
  validate_permutation(permutation, lengths.size());
  std::vector<std::size_t> out(lengths.size());
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    const std::size_t own = lengths[b], partner = lengths[permutation[b]];
    if (lambda == 1.0) {
      out[b] = own;
    } else if (lambda == 0.0) {
      out[b] = partner;
    } else {
      out[b] = std::max(own, partner);
    }
  }
  return out;
}

template <typename Real>
Tensor<Real> mix_rows(const Tensor<Real>& x, std::span<const std::size_t> permutation,
                      double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ParameterError("mixup weight must lie in [0, 1], got " + std::to_string(lambda));
  }
  validate_permutation(permutation, x.dim(0));
  const Tensor<Real> partner = index_select_rows(x, permutation);
  return add(scale(x, Real(lambda)), scale(partner, Real(1.0 - lambda)));
}

template <typename Real>
MixupResult<Real> mixup(const Tensor<Real>& x, const std::vector<std::vector<int>>& labels,
                        double lambda, RngStream& rng) {
  if (x.rank() < 1 || x.dim(0) < 1) throw DimensionError("mixup needs a batch of at least one");
  if (labels.size() != x.dim(0)) throw PlanError("label count does not match batch size");
  MixupResult<Real> result;
  result.permutation = sample_permutation(x.dim(0), rng);
  result.mixed = mix_rows(x, result.permutation, lambda);
  result.labelsShuffled.reserve(labels.size());
  for (std::size_t p : result.permutation) result.labelsShuffled.push_back(labels[p]);
  return result;
}

void SpecAugmentStats::merge(const SpecAugmentStats& other) {
  timeWarps += other.timeWarps;
  timeMasks += other.timeMasks;
  freqMasks += other.freqMasks;
  timeIntervals.insert(timeIntervals.end(), other.timeIntervals.begin(),
                       other.timeIntervals.end());
  freqIntervals.insert(freqIntervals.end(), other.freqIntervals.begin(),
                       other.freqIntervals.end());
}

template <typename T>
void time_warp_inplace(std::span<T> frames, std::size_t cols, std::size_t validLength,
                       std::size_t anchor, std::ptrdiff_t shift) {
  const std::size_t n = validLength;
  if (n < 2 || shift == 0) return;
  const std::ptrdiff_t target = std::ptrdiff_t(anchor) + shift;
  if (anchor >= n || target < 0 || target >= std::ptrdiff_t(n)) {
    throw ParameterError("time warp anchor/shift outside the valid region");
  }
  const double a = double(anchor), dst = double(target), last = double(n - 1);
  std::vector<T> src(frames.begin(), frames.begin() + std::ptrdiff_t(n * cols));
  for (std::size_t t = 0; t < n; ++t) {
    const double td = double(t);
    double s;
    if (td <= dst) {
      s = dst > 0.0 ? td * (a / dst) : 0.0;
    } else {
      s = a + (td - dst) * ((last - a) / (last - dst));
    }
    s = std::clamp(s, 0.0, last);
    const std::size_t lo = std::size_t(std::floor(s));
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = s - double(lo);
    for (std::size_t c = 0; c < cols; ++c) {
      const double v0 = double(src[lo * cols + c]);
      const double v1 = double(src[hi * cols + c]);
      frames[t * cols + c] = frac == 0.0 ? src[lo * cols + c] : T(v0 + (v1 - v0) * frac);
    }
  }
}

template <typename T>
bool random_time_warp_inplace(std::span<T> frames, std::size_t cols, std::size_t validLength,
                              std::size_t window, RngStream& rng) {
  if (window == 0 || validLength <= 2 * window) return false;
  const auto anchor = std::size_t(
      rng.uniform_int(std::int64_t(window), std::int64_t(validLength - window) - 1));
  const auto shift = std::ptrdiff_t(rng.uniform_int(-std::int64_t(window), std::int64_t(window)));
  time_warp_inplace(frames, cols, validLength, anchor, shift);
  return true;
}

template <typename T>
SpecAugmentStats spec_augment_inplace(std::span<T> frames, std::size_t cols,
                                      std::size_t validLength, const SpecAugmentConfig& cfg,
                                      RngStream& rng) {
  SpecAugmentStats stats;
  if (validLength == 0 || cols == 0) return stats;
  if (cfg.enabledTime) {
    if (random_time_warp_inplace(frames, cols, validLength, cfg.timeWarpWindow, rng)) {
      ++stats.timeWarps;
    }
    for (std::size_t m = 0; m < cfg.numTimeMasks; ++m) {
      const auto width = std::size_t(rng.uniform_int(0, std::int64_t(cfg.timeMaskWidth)));
      const auto start = std::size_t(rng.uniform_int(0, std::int64_t(validLength) - 1));
      const std::size_t end = std::min(start + width, validLength);
      ++stats.timeMasks;
      if (end > start) {
        std::fill(frames.begin() + std::ptrdiff_t(start * cols),
                  frames.begin() + std::ptrdiff_t(end * cols), T(0));
        stats.timeIntervals.emplace_back(start, end);
      }
    }
  }
  if (cfg.enabledFreq) {
    for (std::size_t m = 0; m < cfg.numFreqMasks; ++m) {
      const auto width = std::size_t(rng.uniform_int(0, std::int64_t(cfg.freqMaskWidth)));
      const auto start = std::size_t(rng.uniform_int(0, std::int64_t(cols) - 1));
      const std::size_t end = std::min(start + width, cols);
      ++stats.freqMasks;
      if (end > start) {
        for (std::size_t t = 0; t < validLength; ++t) {
          std::fill(frames.begin() + std::ptrdiff_t(t * cols + start),
                    frames.begin() + std::ptrdiff_t(t * cols + end), T(0));
        }
        stats.freqIntervals.emplace_back(start, end);
      }
    }
  }
  return stats;
}

FeatureMatrix spec_augment(const FeatureMatrix& x, std::size_t validLength,
                           const SpecAugmentConfig& cfg, RngStream& rng,
                           SpecAugmentStats* stats) {
  FeatureMatrix out = x;
  auto s = spec_augment_inplace(std::span<float>(out.values), out.cols,
                                std::min(validLength, out.rows), cfg, rng);
  if (stats) *stats = std::move(s);
  return out;
}

FeatureMatrix time_warp(const FeatureMatrix& x, std::size_t window, RngStream& rng) {
  FeatureMatrix out = x;
  random_time_warp_inplace(std::span<float>(out.values), out.cols, out.rows, window, rng);
  return out;
}

template Tensor<float> mix_rows(const Tensor<float>&, std::span<const std::size_t>, double);
template Tensor<double> mix_rows(const Tensor<double>&, std::span<const std::size_t>, double);
template MixupResult<float> mixup(const Tensor<float>&, const std::vector<std::vector<int>>&,
                                  double, RngStream&);
template MixupResult<double> mixup(const Tensor<double>&, const std::vector<std::vector<int>>&,
                                   double, RngStream&);
template SpecAugmentStats spec_augment_inplace(std::span<float>, std::size_t, std::size_t,
                                               const SpecAugmentConfig&, RngStream&);
template SpecAugmentStats spec_augment_inplace(std::span<double>, std::size_t, std::size_t,
                                               const SpecAugmentConfig&, RngStream&);
template void time_warp_inplace(std::span<float>, std::size_t, std::size_t, std::size_t,
                                std::ptrdiff_t);
template void time_warp_inplace(std::span<double>, std::size_t, std::size_t, std::size_t,
                                std::ptrdiff_t);
template bool random_time_warp_inplace(std::span<float>, std::size_t, std::size_t, std::size_t,
                                       RngStream&);
template bool random_time_warp_inplace(std::span<double>, std::size_t, std::size_t,
                                       std::size_t, RngStream&);

}  // namespace mixrep
