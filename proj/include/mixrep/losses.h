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

#ifndef MIXREP_LOSSES_H_
#define MIXREP_LOSSES_H_

#include <cstddef>
#include <span>
#include <vector>

#include "mixrep/model.h"
#include "mixrep/tensor.h"

namespace mixrep {

// Mean over utterances of -log p(target | logProbs). logProbs: [B, T, V].
// Raises AlignmentError when a target cannot fit its input length.
template <typename Real>
Tensor<Real> ctc_loss(const Tensor<Real>& logProbs, const std::vector<std::vector<int>>& targets,
                      std::span<const std::size_t> inputLengths, int blank = 0);

// Minimum frames a CTC alignment of `target` needs: its length plus one
// blank between each pair of repeated labels.
std::size_t ctc_min_frames(std::span<const int> target);

// logits: [B, L, V]; targets holds B * L ids, padId marks ignored positions.
// Per position (1 - eps) * -log p[target] + eps * mean_v -log p[v], where v
// ranges over the vocabulary minus padId. Positions are averaged per
// utterance, then utterances are averaged.
template <typename Real>
Tensor<Real> label_smoothed_ce(const Tensor<Real>& logits, std::span<const int> targets,
                               int padId, double eps = 0.1);

template <typename Real>
Tensor<Real> joint_loss(const Tensor<Real>& ctc, const Tensor<Real>& ce, double alphaJoint = 0.3);

// lambda * li + (1 - lambda) * lj.
template <typename Real>
Tensor<Real> mix_losses(const Tensor<Real>& li, const Tensor<Real>& lj, double lambda);

struct LossBreakdown {
  double ctc = 0.0;
  double ce = 0.0;
  double joint = 0.0;
  bool mixed = false;
  double mixedJoint = 0.0;
  double lambda = 1.0;
};

template <typename Real>
struct LossResult {
  Tensor<Real> loss;
  LossBreakdown breakdown;
};

struct LossConfig {
  double alphaJoint = 0.3;
  double labelSmoothing = 0.1;
};

// Decoder input (sos + y) and target (y + eos) for teacher forcing.
struct DecoderIo {
  std::vector<std::vector<int>> prefixes;
  // batch * maxLen ids; -1 marks padding.
  std::vector<int> targets;
  std::size_t maxLen = 0;
};
DecoderIo decoder_io(const std::vector<std::vector<int>>& labels, int sosEos);

// Joint loss of one label set on an encoder output.
template <typename Real>
LossResult<Real> plain_loss(const Model<Real>& model, const ForwardTrace<Real>& trace,
                            const std::vector<std::vector<int>>& labels, ForwardContext& ctx,
                            const LossConfig& cfg, RngStream* decoderDropout = nullptr);

// lambda * L(Y_i) + (1 - lambda) * L(Y_j) on the same encoder output. The
// second decoder pass draws dropout from ctx.secondaryDropout. A term with
// zero weight is not evaluated.
template <typename Real>
LossResult<Real> mixed_loss(const Model<Real>& model, const ForwardTrace<Real>& trace,
                            const std::vector<std::vector<int>>& labelsI,
                            const std::vector<std::vector<int>>& labelsJ, ForwardContext& ctx,
                            const LossConfig& cfg);

// labels[permutation[b]] for every b.
std::vector<std::vector<int>> permute_labels(const std::vector<std::vector<int>>& labels,
                                             std::span<const std::size_t> permutation);

}  // namespace mixrep

#endif  // MIXREP_LOSSES_H_
