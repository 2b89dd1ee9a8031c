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

#include "mixrep/model.h"

#include <algorithm>
#include <cmath>

#include "mixrep/errors.h"
#include "mixrep/ops.h"

namespace mixrep {

void ModelConfig::validate() const {
  if (encoderLayers < 1) throw ConfigError("model needs at least one encoder layer");
  if (attentionHeads < 1 || modelDim % attentionHeads != 0) {
    throw ConfigError("model dim " + std::to_string(modelDim) + " not divisible by " +
                      std::to_string(attentionHeads) + " heads");
  }
  if (convKernel % 2 == 0) throw ConfigError("conv kernel must be odd");
  if (featureDim < 1) throw ConfigError("feature dim must be >= 1");
  if (vocabSize < 3) throw ConfigError("vocabulary must hold blank, sos/eos and a token");
  if (subsampleChannels < 1 || ffnDim < 1 || modelDim < 1) {
    throw ConfigError("model extents must be positive");
  }
  if (maxTargetLength < 2) throw ConfigError("maxTargetLength must be >= 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

std::size_t subsampled_length(std::size_t frames) {
  if (frames < 7) return 0;
  return ((frames - 1) / 2 - 1) / 2;
}

std::size_t subsampled_width(std::size_t featureDim) {
  const std::size_t once = (featureDim - 1) / 2 + 1;
  return (once - 1) / 2 + 1;
}

std::vector<std::vector<double>> sinusoidal_positions(std::size_t length, std::size_t dim) {
  std::vector<std::vector<double>> pe(length, std::vector<double>(dim, 0.0));
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t i = 0; i < dim; i += 2) {
      const double rate = std::exp(-std::log(10000.0) * double(i) / double(dim));
      pe[t][i] = std::sin(double(t) * rate);
      if (i + 1 < dim) pe[t][i + 1] = std::cos(double(t) * rate);
    }
  }
  return pe;
}

std::vector<int> ctc_collapse(std::span<const int> frameIds, int blank) {
  std::vector<int> out;
  int prev = -1;
  for (int id : frameIds) {
    if (id != prev && id != blank) out.push_back(id);
    prev = id;
  }
  return out;
}

template <typename Real>
Model<Real>::Model(const ModelConfig& cfg, RngStream& init) : cfg_(cfg) {
  cfg_.validate();
  build(&init);
}

template <typename Real>
Model<Real>::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  build(nullptr);
}

template <typename Real>
Tensor<Real> Model<Real>::make_param(const std::string& name, Shape shape, double initScale,
                                     RngStream* init, Real fill) {
  auto t = Tensor<Real>::full(std::move(shape), fill, true);
  if (init && initScale > 0.0) {
    for (Real& v : t.mutable_data()) v = Real((init->uniform() * 2.0 - 1.0) * initScale);
  }
  params_.push_back({name, t});
  return t;
}

template <typename Real>
typename Model<Real>::Linear Model<Real>::make_linear(const std::string& name, std::size_t in,
                                                      std::size_t out, RngStream* init) {
  const double bound = std::sqrt(6.0 / double(in + out));
  Linear l;
  l.weight = make_param(name + ".weight", {in, out}, bound, init);
  l.bias = make_param(name + ".bias", {out}, 0.0, init);
  return l;
}

template <typename Real>
typename Model<Real>::Norm Model<Real>::make_norm(const std::string& name, std::size_t dim) {
  Norm n;
  n.gamma = make_param(name + ".gamma", {dim}, 0.0, nullptr, Real(1));
  n.beta = make_param(name + ".beta", {dim}, 0.0, nullptr);
  return n;
}

template <typename Real>
typename Model<Real>::FeedForward Model<Real>::make_ffn(const std::string& name,
                                                        RngStream* init) {
  FeedForward f;
  f.norm = make_norm(name + ".norm", cfg_.modelDim);
  f.in = make_linear(name + ".in", cfg_.modelDim, cfg_.ffnDim, init);
  f.out = make_linear(name + ".out", cfg_.ffnDim, cfg_.modelDim, init);
  return f;
}

template <typename Real>
typename Model<Real>::Attention Model<Real>::make_attention(const std::string& name,
                                                            RngStream* init) {
  const std::size_t d = cfg_.modelDim;
  Attention a;
  a.norm = make_norm(name + ".norm", d);
  a.query = make_linear(name + ".query", d, d, init);
  a.key = make_linear(name + ".key", d, d, init);
  a.value = make_linear(name + ".value", d, d, init);
  a.out = make_linear(name + ".out", d, d, init);
  return a;
}

template <typename Real>
void Model<Real>::build(RngStream* init) {
  const std::size_t d = cfg_.modelDim, C = cfg_.subsampleChannels, V = cfg_.vocabSize;
  const std::size_t f2 = subsampled_width(cfg_.featureDim);

  conv1Kernel_ = make_param("subsample.conv1.kernel", {C, 3, 3, 1}, 1.0 / 3.0, init);
  conv1Bias_ = make_param("subsample.conv1.bias", {C}, 0.0, init);
  conv2Kernel_ = make_param("subsample.conv2.kernel", {C, 3, 3, C},
                            1.0 / std::sqrt(9.0 * double(C)), init);
  conv2Bias_ = make_param("subsample.conv2.bias", {C}, 0.0, init);
  subsampleProj_ = make_linear("subsample.proj", C * f2, d, init);

  for (std::size_t i = 0; i < cfg_.encoderLayers; ++i) {
    const std::string p = "encoder." + std::to_string(i + 1);
    EncoderBlock blk;
    blk.ffn1 = make_ffn(p + ".ffn1", init);
    blk.selfAttention = make_attention(p + ".mhsa", init);
    blk.conv.norm = make_norm(p + ".conv.norm", d);
    blk.conv.pointwiseIn = make_linear(p + ".conv.pointwise_in", d, 2 * d, init);
    blk.conv.depthwiseKernel = make_param(p + ".conv.depthwise.kernel", {d, cfg_.convKernel},
                                          1.0 / std::sqrt(double(cfg_.convKernel)), init);
    blk.conv.depthwiseBias = make_param(p + ".conv.depthwise.bias", {d}, 0.0, init);
    blk.conv.depthwiseNorm = make_norm(p + ".conv.depthwise_norm", d);
    blk.conv.pointwiseOut = make_linear(p + ".conv.pointwise_out", d, d, init);
    blk.ffn2 = make_ffn(p + ".ffn2", init);
    blk.finalNorm = make_norm(p + ".final_norm", d);
    encoder_.push_back(std::move(blk));
  }
  ctcHead_ = make_linear("ctc.proj", d, V, init);

  embedding_ = make_param("decoder.embedding", {V, d}, 1.0, init);
  for (std::size_t i = 0; i < cfg_.decoderLayers; ++i) {
    const std::string p = "decoder." + std::to_string(i + 1);
    DecoderBlock blk;
    blk.selfAttention = make_attention(p + ".self_attn", init);
    blk.crossAttention = make_attention(p + ".cross_attn", init);
    blk.ffn = make_ffn(p + ".ffn", init);
    decoder_.push_back(std::move(blk));
  }
  decoderNorm_ = make_norm("decoder.final_norm", d);
  outputProj_ = make_linear("decoder.output", d, V, init);
}

template <typename Real>
std::size_t Model<Real>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <typename Real>
void Model<Real>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename Real>
Tensor<Real> Model<Real>::apply(const Linear& l, const Tensor<Real>& x) const {
  return add(matmul(x, l.weight), l.bias);
}

template <typename Real>
Tensor<Real> Model<Real>::apply(const Norm& n, const Tensor<Real>& x) const {
  return layer_norm(x, n.gamma, n.beta);
}

template <typename Real>
Tensor<Real> Model<Real>::drop(const Tensor<Real>& x, ForwardContext& ctx, RngStream* rng) const {
  if (!ctx.training || cfg_.dropout == 0.0) return x;
  RngStream* stream = rng ? rng : ctx.dropout;
  if (!stream) throw UsageError("training forward pass needs a dropout stream");
  return dropout(x, cfg_.dropout, true, *stream);
}

template <typename Real>
Tensor<Real> Model<Real>::positions(std::size_t length) const {
  const auto pe = sinusoidal_positions(length, cfg_.modelDim);
  std::vector<Real> flat;
  flat.reserve(length * cfg_.modelDim);
  for (const auto& row : pe) {
    for (double v : row) flat.push_back(Real(v));
  }
  return Tensor<Real>::from({length, cfg_.modelDim}, std::move(flat));
}

template <typename Real>
Tensor<Real> Model<Real>::feed_forward(const FeedForward& f, const Tensor<Real>& x, bool swishAct,
                                       ForwardContext& ctx, RngStream* rng) const {
  Tensor<Real> h = apply(f.in, apply(f.norm, x));
  h = swishAct ? swish(h) : relu(h);
  h = drop(h, ctx, rng);
  return drop(apply(f.out, h), ctx, rng);
}

template <typename Real>
Tensor<Real> Model<Real>::attend(const Attention& a, const Tensor<Real>& query,
                                 const Tensor<Real>& memory,
                                 std::span<const std::size_t> keyLengths, bool causal) const {
  const std::size_t B = query.dim(0), Tq = query.dim(1), Tk = memory.dim(1);
  const std::size_t H = cfg_.attentionHeads, dh = cfg_.modelDim / H;
  auto heads = [&](const Tensor<Real>& x, std::size_t T) {
    return reshape(swap_middle_axes(reshape(x, {B, T, H, dh})), {B * H, T, dh});
  };
  const Tensor<Real> q = heads(apply(a.query, query), Tq);
  const Tensor<Real> k = heads(apply(a.key, memory), Tk);
  const Tensor<Real> v = heads(apply(a.value, memory), Tk);
  std::vector<std::size_t> lens(B * H);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H; ++h) lens[b * H + h] = keyLengths[b];
  }
  const Tensor<Real> scores = scale(batched_matmul(q, k, true), Real(1.0 / std::sqrt(double(dh))));
  const Tensor<Real> weights = attention_softmax(scores, std::span<const std::size_t>(lens), causal);
  const Tensor<Real> context = batched_matmul(weights, v);
  const Tensor<Real> merged =
      reshape(swap_middle_axes(reshape(context, {B, H, Tq, dh})), {B, Tq, cfg_.modelDim});
  return apply(a.out, merged);
}

template <typename Real>
Tensor<Real> Model<Real>::conv_module(const ConvModule& c, const Tensor<Real>& x,
                                      std::span<const std::size_t> lengths,
                                      ForwardContext& ctx) const {
  Tensor<Real> h = glu(apply(c.pointwiseIn, apply(c.norm, x)));
  h = mask_padding(h, lengths);
  h = add(depthwise_conv1d(h, c.depthwiseKernel, (cfg_.convKernel - 1) / 2), c.depthwiseBias);
  h = swish(apply(c.depthwiseNorm, h));
  return drop(apply(c.pointwiseOut, h), ctx, nullptr);
}

template <typename Real>
Tensor<Real> Model<Real>::encoder_block(std::size_t block, const Tensor<Real>& x,
                                        std::span<const std::size_t> lengths,
                                        ForwardContext& ctx) const {
  const EncoderBlock& blk = encoder_.at(block - 1);
  Tensor<Real> h = add(x, scale(feed_forward(blk.ffn1, x, true, ctx, nullptr), Real(0.5)));
  const Tensor<Real> normed = apply(blk.selfAttention.norm, h);
  h = add(h, drop(attend(blk.selfAttention, normed, normed, lengths, false), ctx, nullptr));
  h = add(h, conv_module(blk.conv, h, lengths, ctx));
  h = add(h, scale(feed_forward(blk.ffn2, h, true, ctx, nullptr), Real(0.5)));
  return mask_padding(apply(blk.finalNorm, h), lengths);
}

template <typename Real>
Tensor<Real> Model<Real>::subsample(const Tensor<Real>& features,
                                    std::span<const std::size_t> lengths,
                                    ForwardContext& ctx) const {
  const std::size_t B = features.dim(0), T = features.dim(1), F = features.dim(2);
  if (F != cfg_.featureDim) {
    throw DimensionError("features have dim " + std::to_string(F) + ", model expects " +
                         std::to_string(cfg_.featureDim));
  }
  if (T < 7) throw InputError("subsampler needs at least 7 frames, got " + std::to_string(T));
  std::vector<std::size_t> outLengths(lengths.size());
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    outLengths[b] = subsampled_length(lengths[b]);
    if (outLengths[b] == 0) {
      throw InputError("utterance " + std::to_string(b) + " has " + std::to_string(lengths[b]) +
                       " frames; the subsampler needs at least 7");
    }
  }
  Tensor<Real> h = reshape(features, {B, T, F, 1});
  // Time is unpadded so valid frames never see padding; frequency is padded
  // by one so narrow feature vectors survive both stages.
  h = relu(add(conv2d(h, conv1Kernel_, 2, 0, 1), conv1Bias_));
  h = relu(add(conv2d(h, conv2Kernel_, 2, 0, 1), conv2Bias_));
  const std::size_t T2 = h.dim(1);
  h = reshape(h, {B, T2, h.dim(2) * h.dim(3)});
  h = add(apply(subsampleProj_, h), positions(T2));
  h = drop(h, ctx, nullptr);
  return mask_padding(h, std::span<const std::size_t>(outLengths));
}

template <typename Real>
ForwardTrace<Real> Model<Real>::encode(const Batch& batch, const MixPlan& plan,
                                       const SpecAugmentConfig& specCfg,
                                       ForwardContext& ctx) const {
  const std::size_t B = batch.batchSize, T = batch.maxFrames, F = batch.featureDim;
  if (plan.apply) {
    if (plan.layerIndex < 0 || std::size_t(plan.layerIndex) > cfg_.encoderLayers) {
      throw PlanError("mixup layer " + std::to_string(plan.layerIndex) + " outside [0, " +
                      std::to_string(cfg_.encoderLayers) + "]");
    }
    validate_permutation(plan.permutation, B);
    if (!(plan.lambda >= 0.0 && plan.lambda <= 1.0)) throw PlanError("mixup weight outside [0, 1]");
  }
  ForwardTrace<Real> trace;
  trace.mixApplied = plan.apply;
  trace.layerIndex = plan.layerIndex;
  trace.lambda = plan.apply ? plan.lambda : 1.0;
  trace.permutation = plan.permutation;

  std::vector<Real> raw(batch.features.begin(), batch.features.end());
  Tensor<Real> x = Tensor<Real>::from({B, T, F}, std::move(raw));
  std::vector<std::size_t> lengths = batch.featLengths;
  const auto mixHere = [&](std::size_t index) {
    return plan.apply && std::size_t(plan.layerIndex) == index;
  };

  // Index 0: mix raw features first, then mask.
  if (mixHere(0)) {
    x = mix_rows(x, plan.permutation, plan.lambda);
    lengths = mixed_lengths(lengths, plan.permutation, plan.lambda);
  }
  if (ctx.recordLayers) trace.inputBeforeAugment = x;
  if (ctx.training && ctx.augment) {
    x = x.detach();
    auto data = x.mutable_data();
    for (std::size_t b = 0; b < B; ++b) {
      trace.augmentStats.merge(spec_augment_inplace(data.subspan(b * T * F, T * F), F,
                                                    lengths[b], specCfg, *ctx.augment));
    }
  }
  if (ctx.recordLayers) trace.inputAfterAugment = x;

  Tensor<Real> h = subsample(x, lengths, ctx);
  std::vector<std::size_t> subLengths(B);
  for (std::size_t b = 0; b < B; ++b) subLengths[b] = subsampled_length(lengths[b]);
  if (ctx.recordLayers) trace.layerOutputs.push_back(h);

  for (std::size_t i = 1; i <= cfg_.encoderLayers; ++i) {
    h = encoder_block(i, h, subLengths, ctx);
    if (mixHere(i)) {
      h = mix_rows(h, plan.permutation, plan.lambda);
      subLengths = mixed_lengths(subLengths, plan.permutation, plan.lambda);
    }
    if (ctx.recordLayers) trace.layerOutputs.push_back(h);
  }
  trace.encoderOutput = h;
  trace.subsampledLengths = std::move(subLengths);
  return trace;
}

template <typename Real>
Tensor<Real> Model<Real>::ctc_log_probs(const Tensor<Real>& encoderOutput) const {
  return log_softmax(apply(ctcHead_, encoderOutput));
}

template <typename Real>
Tensor<Real> Model<Real>::decode(const Tensor<Real>& encoderOutput,
                                 std::span<const std::size_t> encoderLengths,
                                 const std::vector<std::vector<int>>& prefixes,
                                 ForwardContext& ctx, RngStream* dropoutOverride) const {
  const std::size_t B = prefixes.size();
  if (B != encoderOutput.dim(0) || encoderLengths.size() != B) {
    throw DimensionError("decoder batch mismatch: " + std::to_string(B) + " prefixes for " +
                         shape_string(encoderOutput.shape()));
  }
  std::size_t L = 0;
  for (const auto& p : prefixes) {
    if (p.empty() || p.front() != int(cfg_.vocabSize) - 1) {
      throw InputError("decoder prefix must start with sos");
    }
    L = std::max(L, p.size());
  }
  if (L > cfg_.maxTargetLength) {
    throw InputError("decoder prefix of length " + std::to_string(L) + " exceeds maximum " +
                     std::to_string(cfg_.maxTargetLength));
  }
  std::vector<int> ids(B * L, int(cfg_.vocabSize) - 1);
  std::vector<std::size_t> prefixLengths(B);
  for (std::size_t b = 0; b < B; ++b) {
    std::copy(prefixes[b].begin(), prefixes[b].end(), ids.begin() + std::ptrdiff_t(b * L));
    prefixLengths[b] = prefixes[b].size();
  }
  RngStream* rng = dropoutOverride ? dropoutOverride : ctx.dropout;
  Tensor<Real> h = add(embedding(embedding_, std::span<const int>(ids), {B, L}), positions(L));
  h = drop(h, ctx, rng);
  for (const auto& blk : decoder_) {
    const Tensor<Real> normed = apply(blk.selfAttention.norm, h);
    h = add(h, drop(attend(blk.selfAttention, normed, normed, prefixLengths, true), ctx, rng));
    h = add(h, drop(attend(blk.crossAttention, apply(blk.crossAttention.norm, h), encoderOutput,
                           encoderLengths, false),
                    ctx, rng));
    h = add(h, feed_forward(blk.ffn, h, false, ctx, rng));
  }
  return apply(outputProj_, apply(decoderNorm_, h));
}

template <typename Real>
std::vector<std::vector<int>> Model<Real>::greedy_decode(
    const Tensor<Real>& encoderOutput, std::span<const std::size_t> encoderLengths,
    DecodeMode mode) const {
  NoGradGuard noGrad;
  const std::size_t B = encoderOutput.dim(0), T = encoderOutput.dim(1), V = cfg_.vocabSize;
  std::vector<std::vector<int>> hyps(B);
  if (mode == DecodeMode::kCtc) {
    const Tensor<Real> lp = ctc_log_probs(encoderOutput);
    for (std::size_t b = 0; b < B; ++b) {
      std::vector<int> best(std::min(encoderLengths[b], T));
      for (std::size_t t = 0; t < best.size(); ++t) {
        const Real* row = lp.data().data() + (b * T + t) * V;
        best[t] = int(std::max_element(row, row + V) - row);
      }
      hyps[b] = ctc_collapse(best, 0);
    }
    return hyps;
  }

  const int sosEos = int(V) - 1;
  std::vector<std::vector<int>> prefixes(B, std::vector<int>{sosEos});
  std::vector<bool> done(B, false);
  std::size_t maxSteps = 0;
  for (std::size_t b = 0; b < B; ++b) maxSteps = std::max(maxSteps, 2 * encoderLengths[b]);
  maxSteps = std::min(maxSteps, cfg_.maxTargetLength - 1);
  ForwardContext evalCtx;
  for (std::size_t step = 0; step < maxSteps; ++step) {
    const Tensor<Real> logits = decode(encoderOutput, encoderLengths, prefixes, evalCtx);
    const std::size_t L = logits.dim(1);
    bool anyActive = false;
    for (std::size_t b = 0; b < B; ++b) {
      if (done[b]) continue;
      const Real* row = logits.data().data() + (b * L + step) * V;
      const int next = int(std::max_element(row, row + V) - row);
      if (next == sosEos || step + 1 > 2 * encoderLengths[b]) {
        done[b] = true;
        continue;
      }
      prefixes[b].push_back(next);
      hyps[b].push_back(next);
      if (hyps[b].size() >= 2 * encoderLengths[b]) done[b] = true;
      anyActive = anyActive || !done[b];
    }
    if (!anyActive) break;
    // Finished rows keep a fixed-length prefix; pad so all rows share L.
    for (std::size_t b = 0; b < B; ++b) {
      if (done[b]) prefixes[b].push_back(sosEos);
    }
  }
  return hyps;
}

template class Model<float>;
template class Model<double>;

}  // namespace mixrep
