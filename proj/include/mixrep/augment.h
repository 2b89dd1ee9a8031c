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

#ifndef MIXREP_AUGMENT_H_
#define MIXREP_AUGMENT_H_

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "mixrep/dataio.h"
#include "mixrep/rng.h"
#include "mixrep/tensor.h"

namespace mixrep {

struct MixupConfig {
  double alpha = 2.0;
  // Probability that a whole batch is mixed.
  double tau = 0.15;
  // Eligible layer indices; 0 is the input features.
  std::vector<int> layerSet{0};

  void validate(int encoderLayers) const;
};

struct SpecAugmentConfig {
  std::size_t timeWarpWindow = 5;
  std::size_t numFreqMasks = 2;
  std::size_t freqMaskWidth = 30;
  std::size_t numTimeMasks = 2;
  std::size_t timeMaskWidth = 40;
  bool enabledTime = true;
  bool enabledFreq = true;
};

// One batch's mixup decision.
struct MixPlan {
  bool apply = false;
  double lambda = 1.0;
  int layerIndex = 0;
  std::vector<std::size_t> permutation;
};

double sample_lambda(double alpha, RngStream& rng);
int sample_layer(std::span<const int> layerSet, RngStream& rng);
bool decide_apply(double tau, RngStream& rng);
std::vector<std::size_t> sample_permutation(std::size_t batchSize, RngStream& rng);

// Draw order: apply flag, then lambda, layer and permutation when applied.
MixPlan sample_plan(const MixupConfig& cfg, std::size_t batchSize, RngStream& rng);

void validate_permutation(std::span<const std::size_t> permutation, std::size_t batchSize);

// Valid length of a mixed row: max of the two sources, except that a source
// with zero weight contributes nothing.
std::vector<std::size_t> mixed_lengths(std::span<const std::size_t> lengths,
                                       std::span<const std::size_t> permutation,
                                       double lambda);

// lambda * x + (1 - lambda) * x[permutation] along axis 0.
template <typename Real>
Tensor<Real> mix_rows(const Tensor<Real>& x, std::span<const std::size_t> permutation,
                      double lambda);

template <typename Real>
struct MixupResult {
  Tensor<Real> mixed;
  std::vector<std::vector<int>> labelsShuffled;
  std::vector<std::size_t> permutation;
};

template <typename Real>
MixupResult<Real> mixup(const Tensor<Real>& x, const std::vector<std::vector<int>>& labels,
                        double lambda, RngStream& rng);

struct SpecAugmentStats {
  std::size_t timeWarps = 0;
  std::size_t timeMasks = 0;
  std::size_t freqMasks = 0;
  // Half-open [begin, end) intervals actually zeroed.
  std::vector<std::pair<std::size_t, std::size_t>> timeIntervals;
  std::vector<std::pair<std::size_t, std::size_t>> freqIntervals;

  void merge(const SpecAugmentStats& other);
};

// In-place on the first validLength rows of a rows x cols block.
template <typename T>
SpecAugmentStats spec_augment_inplace(std::span<T> frames, std::size_t cols,
                                      std::size_t validLength, const SpecAugmentConfig& cfg,
                                      RngStream& rng);

FeatureMatrix spec_augment(const FeatureMatrix& x, std::size_t validLength,
                           const SpecAugmentConfig& cfg, RngStream& rng,
                           SpecAugmentStats* stats = nullptr);

// Piecewise-linear resampling of the time axis that moves frame `anchor` to
// `anchor + shift` with both endpoints fixed.
template <typename T>
void time_warp_inplace(std::span<T> frames, std::size_t cols, std::size_t validLength,
                       std::size_t anchor, std::ptrdiff_t shift);

// Samples anchor ~ U[W, T - W) and shift ~ U[-W, W]; identity when T <= 2W.
// Returns false when no warp was applied.
template <typename T>
bool random_time_warp_inplace(std::span<T> frames, std::size_t cols, std::size_t validLength,
                              std::size_t window, RngStream& rng);

FeatureMatrix time_warp(const FeatureMatrix& x, std::size_t window, RngStream& rng);

}  // namespace mixrep

#endif  // MIXREP_AUGMENT_H_
