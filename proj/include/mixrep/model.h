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

#ifndef MIXREP_MODEL_H_
#define MIXREP_MODEL_H_

#include <cstddef>
#include <string>
#include <vector>

#include "mixrep/augment.h"
#include "mixrep/dataio.h"
#include "mixrep/rng.h"
#include "mixrep/tensor.h"

namespace mixrep {

struct ModelConfig {
  std::size_t featureDim = 16;
  std::size_t modelDim = 64;
  std::size_t encoderLayers = 4;
  std::size_t decoderLayers = 1;
  std::size_t attentionHeads = 2;
  std::size_t ffnDim = 128;
  std::size_t convKernel = 7;
  // Channels of the two stride-2 convolutions in the input subsampler.
  std::size_t subsampleChannels = 32;
  std::size_t vocabSize = 12;
  // Longest decoder prefix (sos included) the model accepts.
  std::size_t maxTargetLength = 256;
  double dropout = 0.1;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Valid length after the two stride-2 3x3 convolutions; 0 when T < 7.
std::size_t subsampled_length(std::size_t frames);

// Frequency extent after the subsampler (padding 1 on that axis).
std::size_t subsampled_width(std::size_t featureDim);

std::vector<std::vector<double>> sinusoidal_positions(std::size_t length, std::size_t dim);

struct ForwardContext {
  bool training = false;
  // Consumed sequentially by every dropout site; unused in eval mode.
  RngStream* dropout = nullptr;
  // Dropout stream for the second decoder pass of a mixed loss.
  RngStream* secondaryDropout = nullptr;
  RngStream* augment = nullptr;
  // Keeps the intermediate tensors in the trace for inspection.
  bool recordLayers = false;
};

template <typename Real>
struct ForwardTrace {
  bool mixApplied = false;
  int layerIndex = 0;
  double lambda = 1.0;
  std::vector<std::size_t> permutation;
  Tensor<Real> encoderOutput;
  std::vector<std::size_t> subsampledLengths;
  SpecAugmentStats augmentStats;

  // Filled when ForwardContext::recordLayers is set.
  Tensor<Real> inputBeforeAugment;
  Tensor<Real> inputAfterAugment;
  // [0] is the subsampler output, [i] the output of block i (after mixing
  // when the plan targets it).
  std::vector<Tensor<Real>> layerOutputs;
};

enum class DecodeMode { kCtc, kAttention };

template <typename Real>
struct NamedParameter {
  std::string name;
  Tensor<Real> tensor;
};

// Conformer encoder with per-layer mixup injection, CTC head and
// transformer decoder.
template <typename Real>
class Model {
 public:
  // Parameters are drawn from `init`.
  Model(const ModelConfig& cfg, RngStream& init);
  // All parameters zero; for loading checkpoints.
  explicit Model(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  std::vector<NamedParameter<Real>>& parameters() { return params_; }
  const std::vector<NamedParameter<Real>>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  void zero_grad();

  // Input subsampler alone: features [B, T, F] -> [B, T', d].
  Tensor<Real> subsample(const Tensor<Real>& features, std::span<const std::size_t> lengths,
                         ForwardContext& ctx) const;

  ForwardTrace<Real> encode(const Batch& batch, const MixPlan& plan,
                            const SpecAugmentConfig& specCfg, ForwardContext& ctx) const;

  // Log-probabilities [B, T', V] of the CTC head.
  Tensor<Real> ctc_log_probs(const Tensor<Real>& encoderOutput) const;

  // Next-token logits [B, L, V]; every prefix starts with sos.
  Tensor<Real> decode(const Tensor<Real>& encoderOutput,
                      std::span<const std::size_t> encoderLengths,
                      const std::vector<std::vector<int>>& prefixes,
                      ForwardContext& ctx, RngStream* dropoutOverride = nullptr) const;

  std::vector<std::vector<int>> greedy_decode(const Tensor<Real>& encoderOutput,
                                              std::span<const std::size_t> encoderLengths,
                                              DecodeMode mode) const;

  Tensor<Real> encoder_block(std::size_t block, const Tensor<Real>& x,
                             std::span<const std::size_t> lengths, ForwardContext& ctx) const;

 private:
  struct Linear {
    Tensor<Real> weight;
    Tensor<Real> bias;
  };
  struct Norm {
    Tensor<Real> gamma;
    Tensor<Real> beta;
  };
  struct FeedForward {
    Norm norm;
    Linear in;
    Linear out;
  };
  struct Attention {
    Norm norm;
    Linear query;
    Linear key;
    Linear value;
    Linear out;
  };
  struct ConvModule {
    Norm norm;
    Linear pointwiseIn;
    Tensor<Real> depthwiseKernel;
    Tensor<Real> depthwiseBias;
    Norm depthwiseNorm;
    Linear pointwiseOut;
  };
  struct EncoderBlock {
    FeedForward ffn1;
    Attention selfAttention;
    ConvModule conv;
    FeedForward ffn2;
    Norm finalNorm;
  };
  struct DecoderBlock {
    Attention selfAttention;
    Attention crossAttention;
    FeedForward ffn;
  };

  void build(RngStream* init);
  Tensor<Real> make_param(const std::string& name, Shape shape, double initScale,
                          RngStream* init, Real fill = Real(0));
  Linear make_linear(const std::string& name, std::size_t in, std::size_t out, RngStream* init);
  Norm make_norm(const std::string& name, std::size_t dim);
  FeedForward make_ffn(const std::string& name, RngStream* init);
  Attention make_attention(const std::string& name, RngStream* init);

  Tensor<Real> apply(const Linear& l, const Tensor<Real>& x) const;
  Tensor<Real> apply(const Norm& n, const Tensor<Real>& x) const;
  Tensor<Real> feed_forward(const FeedForward& f, const Tensor<Real>& x, bool swishAct,
                            ForwardContext& ctx, RngStream* rng) const;
  // `query` and `memory` are already normalized by the caller.
  Tensor<Real> attend(const Attention& a, const Tensor<Real>& query, const Tensor<Real>& memory,
                      std::span<const std::size_t> keyLengths, bool causal) const;
  Tensor<Real> conv_module(const ConvModule& c, const Tensor<Real>& x,
                           std::span<const std::size_t> lengths, ForwardContext& ctx) const;
  Tensor<Real> positions(std::size_t length) const;
  Tensor<Real> drop(const Tensor<Real>& x, ForwardContext& ctx, RngStream* rng) const;

  ModelConfig cfg_;
  std::vector<NamedParameter<Real>> params_;

  Tensor<Real> conv1Kernel_, conv1Bias_, conv2Kernel_, conv2Bias_;
  Linear subsampleProj_;
  std::vector<EncoderBlock> encoder_;
  Linear ctcHead_;
  Tensor<Real> embedding_;
  std::vector<DecoderBlock> decoder_;
  Norm decoderNorm_;
  Linear outputProj_;
};

// Argmax per frame, merge repeats, drop blanks.
std::vector<int> ctc_collapse(std::span<const int> frameIds, int blank = 0);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace mixrep

#endif  // MIXREP_MODEL_H_
