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

#include "mixrep/losses.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mixrep/errors.h"
#include "mixrep/ops.h"

namespace mixrep {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace

std::size_t ctc_min_frames(std::span<const int> target) {
  std::size_t n = target.size();
  for (std::size_t i = 1; i < target.size(); ++i) {
    if (target[i] == target[i - 1]) ++n;
  }
  return n;
}

template <typename Real>
Tensor<Real> ctc_loss(const Tensor<Real>& logProbs, const std::vector<std::vector<int>>& targets,
                      std::span<const std::size_t> inputLengths, int blank) {
  if (logProbs.rank() != 3) {
    throw DimensionError("ctc_loss: logProbs must be [B, T, V], got " +
                         shape_string(logProbs.shape()));
  }
  const std::size_t B = logProbs.dim(0), T = logProbs.dim(1), V = logProbs.dim(2);
  if (targets.size() != B || inputLengths.size() != B) {
    throw DimensionError("ctc_loss: batch of " + std::to_string(B) + " with " +
                         std::to_string(targets.size()) + " targets and " +
                         std::to_string(inputLengths.size()) + " lengths");
  }
  if (blank < 0 || std::size_t(blank) >= V) throw ParameterError("ctc_loss: blank outside vocab");
  const Real* lp = logProbs.data().data();

  // Occupation probabilities per utterance, kept for the backward pass.
  auto gamma = std::make_shared<std::vector<double>>(B * T * V, 0.0);
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const auto& y = targets[b];
    const std::size_t Tb = inputLengths[b];
    if (Tb == 0 || Tb > T) {
      throw DimensionError("ctc_loss: input length " + std::to_string(Tb) + " outside [1, " +
                           std::to_string(T) + "]");
    }
    for (int id : y) {
      if (id < 0 || std::size_t(id) >= V || id == blank) {
        throw ParameterError("ctc_loss: target id " + std::to_string(id) + " invalid");
      }
    }
    const std::size_t need = ctc_min_frames(y);
    if (Tb < need) {
      throw AlignmentError("impossible CTC alignment: utterance " + std::to_string(b) +
                           " has " + std::to_string(Tb) + " frames for a target needing " +
                           std::to_string(need));
    }
    const std::size_t S = 2 * y.size() + 1;
    auto label = [&](std::size_t s) { return s % 2 == 0 ? blank : y[s / 2]; };
    auto at = [&](std::size_t t, std::size_t k) { return double(lp[(b * T + t) * V + k]); };
    auto skip = [&](std::size_t s) { return s >= 2 && s % 2 == 1 && label(s) != label(s - 2); };

    std::vector<double> alpha(Tb * S, kNegInf), beta(Tb * S, kNegInf);
    alpha[0] = at(0, std::size_t(blank));
    if (S > 1) alpha[1] = at(0, std::size_t(label(1)));
    for (std::size_t t = 1; t < Tb; ++t) {
      for (std::size_t s = 0; s < S; ++s) {
        double a = alpha[(t - 1) * S + s];
        if (s >= 1) a = log_add(a, alpha[(t - 1) * S + s - 1]);
        if (skip(s)) a = log_add(a, alpha[(t - 1) * S + s - 2]);
        alpha[t * S + s] = a == kNegInf ? kNegInf : a + at(t, std::size_t(label(s)));
      }
    }
    beta[(Tb - 1) * S + S - 1] = at(Tb - 1, std::size_t(blank));
    if (S > 1) beta[(Tb - 1) * S + S - 2] = at(Tb - 1, std::size_t(label(S - 2)));
    for (std::size_t t = Tb - 1; t-- > 0;) {
      for (std::size_t s = 0; s < S; ++s) {
        double v = beta[(t + 1) * S + s];
        if (s + 1 < S) v = log_add(v, beta[(t + 1) * S + s + 1]);
        if (s + 2 < S && skip(s + 2)) v = log_add(v, beta[(t + 1) * S + s + 2]);
        beta[t * S + s] = v == kNegInf ? kNegInf : v + at(t, std::size_t(label(s)));
      }
    }
    double logLik = alpha[(Tb - 1) * S + S - 1];
    if (S > 1) logLik = log_add(logLik, alpha[(Tb - 1) * S + S - 2]);
    if (!std::isfinite(logLik)) {
      throw NumericError("ctc_loss: non-finite likelihood for utterance " + std::to_string(b));
    }
    total -= logLik;
    for (std::size_t t = 0; t < Tb; ++t) {
      for (std::size_t s = 0; s < S; ++s) {
        const double ab = alpha[t * S + s] + beta[t * S + s];
        if (ab == kNegInf) continue;
        const auto k = std::size_t(label(s));
        (*gamma)[(b * T + t) * V + k] += std::exp(ab - at(t, k) - logLik);
      }
    }
  }
  const double invB = 1.0 / double(B);
  return detail::make_result<Real>(
      {}, {Real(total * invB)}, {logProbs}, [gamma, invB](detail::Node<Real>& self) {
        auto& dX = self.inputs[0]->ensure_grad();
        const double g = double(self.grad[0]) * invB;
        for (std::size_t i = 0; i < dX.size(); ++i) dX[i] -= Real(g * (*gamma)[i]);
      });
}

template <typename Real>
Tensor<Real> label_smoothed_ce(const Tensor<Real>& logits, std::span<const int> targets,
                               int padId, double eps) {
  if (logits.rank() != 3) {
    throw DimensionError("label_smoothed_ce: logits must be [B, L, V], got " +
                         shape_string(logits.shape()));
  }
  const std::size_t B = logits.dim(0), L = logits.dim(1), V = logits.dim(2);
  if (targets.size() != B * L) {
    throw DimensionError("label_smoothed_ce: " + std::to_string(targets.size()) +
                         " targets for logits " + shape_string(logits.shape()));
  }
  if (!(eps >= 0.0 && eps <= 1.0)) throw ParameterError("label smoothing must lie in [0, 1]");
  const bool padInVocab = padId >= 0 && std::size_t(padId) < V;
  const double smoothCount = double(V) - (padInVocab ? 1.0 : 0.0);

  std::vector<std::size_t> counts(B, 0);
  std::size_t utterances = 0;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t l = 0; l < L; ++l) {
      const int t = targets[b * L + l];
      if (t == padId) continue;
      if (t < 0 || std::size_t(t) >= V) {
        throw ParameterError("label_smoothed_ce: target id " + std::to_string(t) + " invalid");
      }
      ++counts[b];
    }
    if (counts[b] > 0) ++utterances;
  }
  if (utterances == 0) throw MetricError("label_smoothed_ce: every position is padding");

  const Real* z = logits.data().data();
  // Softmax rows and per-position weights for the backward pass.
  auto probs = std::make_shared<std::vector<double>>(B * L * V, 0.0);
  auto weights = std::make_shared<std::vector<double>>(B * L, 0.0);
  std::vector<double> logp(V);
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    if (counts[b] == 0) continue;
    const double w = 1.0 / (double(counts[b]) * double(utterances));
    for (std::size_t l = 0; l < L; ++l) {
      const int t = targets[b * L + l];
      if (t == padId) continue;
      const Real* row = z + (b * L + l) * V;
      double mx = kNegInf;
      for (std::size_t v = 0; v < V; ++v) {
        if (!std::isfinite(double(row[v]))) throw NumericError("label_smoothed_ce: non-finite logit");
        mx = std::max(mx, double(row[v]));
      }
      double s = 0.0;
      for (std::size_t v = 0; v < V; ++v) s += std::exp(double(row[v]) - mx);
      const double lse = mx + std::log(s);
      double smooth = 0.0;
      for (std::size_t v = 0; v < V; ++v) {
        logp[v] = double(row[v]) - lse;
        (*probs)[(b * L + l) * V + v] = std::exp(logp[v]);
        if (!(padInVocab && int(v) == padId)) smooth -= logp[v];
      }
      const double pos = (1.0 - eps) * -logp[std::size_t(t)] + eps * smooth / smoothCount;
      total += w * pos;
      (*weights)[b * L + l] = w;
    }
  }
  const std::vector<int> tgt(targets.begin(), targets.end());
  return detail::make_result<Real>(
      {}, {Real(total)}, {logits},
      [probs, weights, tgt, V, eps, padId, padInVocab, smoothCount](detail::Node<Real>& self) {
        auto& dX = self.inputs[0]->ensure_grad();
        const double g = double(self.grad[0]);
        for (std::size_t p = 0; p < weights->size(); ++p) {
          const double w = (*weights)[p];
          if (w == 0.0) continue;
          for (std::size_t v = 0; v < V; ++v) {
            double d = (*probs)[p * V + v];
            if (int(v) == tgt[p]) d -= 1.0 - eps;
            if (!(padInVocab && int(v) == padId)) d -= eps / smoothCount;
            dX[p * V + v] += Real(g * w * d);
          }
        }
      });
}

template <typename Real>
Tensor<Real> joint_loss(const Tensor<Real>& ctc, const Tensor<Real>& ce, double alphaJoint) {
  if (!(alphaJoint >= 0.0 && alphaJoint <= 1.0)) {
    throw ParameterError("joint loss weight must lie in [0, 1]");
  }
  return add(scale(ctc, Real(alphaJoint)), scale(ce, Real(1.0 - alphaJoint)));
}

template <typename Real>
Tensor<Real> mix_losses(const Tensor<Real>& li, const Tensor<Real>& lj, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ParameterError("mixup weight must lie in [0, 1]");
  return add(scale(li, Real(lambda)), scale(lj, Real(1.0 - lambda)));
}

DecoderIo decoder_io(const std::vector<std::vector<int>>& labels, int sosEos) {
  DecoderIo io;
  for (const auto& y : labels) io.maxLen = std::max(io.maxLen, y.size() + 1);
  io.targets.assign(labels.size() * io.maxLen, -1);
  for (std::size_t b = 0; b < labels.size(); ++b) {
    std::vector<int> prefix{sosEos};
    prefix.insert(prefix.end(), labels[b].begin(), labels[b].end());
    std::copy(labels[b].begin(), labels[b].end(), io.targets.begin() + std::ptrdiff_t(b * io.maxLen));
    io.targets[b * io.maxLen + labels[b].size()] = sosEos;
    io.prefixes.push_back(std::move(prefix));
  }
  return io;
}

std::vector<std::vector<int>> permute_labels(const std::vector<std::vector<int>>& labels,
                                             std::span<const std::size_t> permutation) {
  validate_permutation(permutation, labels.size());
  std::vector<std::vector<int>> out;
  out.reserve(labels.size());
  for (std::size_t p : permutation) out.push_back(labels[p]);
  return out;
}

namespace {

template <typename Real>
struct TermLoss {
  Tensor<Real> ctc, ce, joint;
};

template <typename Real>
TermLoss<Real> term_loss(const Model<Real>& model, const ForwardTrace<Real>& trace,
                         const Tensor<Real>& logProbs, const std::vector<std::vector<int>>& labels,
                         ForwardContext& ctx, const LossConfig& cfg, RngStream* decoderDropout) {
  const std::span<const std::size_t> lengths(trace.subsampledLengths);
  TermLoss<Real> out;
  out.ctc = ctc_loss(logProbs, labels, lengths, 0);
  const DecoderIo io = decoder_io(labels, int(model.config().vocabSize) - 1);
  const Tensor<Real> logits =
      model.decode(trace.encoderOutput, lengths, io.prefixes, ctx, decoderDropout);
  out.ce = label_smoothed_ce(logits, std::span<const int>(io.targets), -1, cfg.labelSmoothing);
  out.joint = joint_loss(out.ctc, out.ce, cfg.alphaJoint);
  return out;
}

}  // namespace

template <typename Real>
LossResult<Real> plain_loss(const Model<Real>& model, const ForwardTrace<Real>& trace,
                            const std::vector<std::vector<int>>& labels, ForwardContext& ctx,
                            const LossConfig& cfg, RngStream* decoderDropout) {
  const Tensor<Real> lp = model.ctc_log_probs(trace.encoderOutput);
  const TermLoss<Real> t = term_loss(model, trace, lp, labels, ctx, cfg, decoderDropout);
  LossResult<Real> r;
  r.loss = t.joint;
  r.breakdown.ctc = double(t.ctc.item());
  r.breakdown.ce = double(t.ce.item());
  r.breakdown.joint = double(t.joint.item());
  return r;
}

template <typename Real>
LossResult<Real> mixed_loss(const Model<Real>& model, const ForwardTrace<Real>& trace,
                            const std::vector<std::vector<int>>& labelsI,
                            const std::vector<std::vector<int>>& labelsJ, ForwardContext& ctx,
                            const LossConfig& cfg) {
  const std::size_t B = trace.encoderOutput.dim(0);
  if (labelsI.size() != B || labelsJ.size() != B) {
    throw PlanError("mixed loss needs " + std::to_string(B) + " label rows per side");
  }
  if (trace.mixApplied) validate_permutation(trace.permutation, B);
  const double lambda = trace.mixApplied ? trace.lambda : 1.0;
  if (lambda == 1.0) {
    LossResult<Real> r = plain_loss(model, trace, labelsI, ctx, cfg);
    r.breakdown.mixed = true;
    r.breakdown.mixedJoint = r.breakdown.joint;
    return r;
  }
  const Tensor<Real> lp = model.ctc_log_probs(trace.encoderOutput);
  if (lambda == 0.0) {
    LossResult<Real> r;
    const TermLoss<Real> tj = term_loss(model, trace, lp, labelsJ, ctx, cfg, ctx.secondaryDropout);
    r.loss = tj.joint;
    r.breakdown = {double(tj.ctc.item()), double(tj.ce.item()), double(tj.joint.item()), true,
                   double(tj.joint.item()), 0.0};
    return r;
  }
  const TermLoss<Real> ti = term_loss(model, trace, lp, labelsI, ctx, cfg, nullptr);
  const TermLoss<Real> tj = term_loss(model, trace, lp, labelsJ, ctx, cfg, ctx.secondaryDropout);
  LossResult<Real> r;
  r.loss = mix_losses(ti.joint, tj.joint, lambda);
  auto mixd = [lambda](const Tensor<Real>& a, const Tensor<Real>& b) {
    return lambda * double(a.item()) + (1.0 - lambda) * double(b.item());
  };
  r.breakdown.ctc = mixd(ti.ctc, tj.ctc);
  r.breakdown.ce = mixd(ti.ce, tj.ce);
  r.breakdown.joint = double(r.loss.item());
  r.breakdown.mixed = true;
  r.breakdown.mixedJoint = r.breakdown.joint;
  r.breakdown.lambda = lambda;
  return r;
}

#define MIXREP_INSTANTIATE_LOSSES(Real)                                                      \
  template Tensor<Real> ctc_loss(const Tensor<Real>&, const std::vector<std::vector<int>>&,  \
                                 std::span<const std::size_t>, int);                         \
  template Tensor<Real> label_smoothed_ce(const Tensor<Real>&, std::span<const int>, int,    \
                                          double);                                           \
  template Tensor<Real> joint_loss(const Tensor<Real>&, const Tensor<Real>&, double);        \
  template Tensor<Real> mix_losses(const Tensor<Real>&, const Tensor<Real>&, double);        \
  template LossResult<Real> plain_loss(const Model<Real>&, const ForwardTrace<Real>&,        \
                                       const std::vector<std::vector<int>>&, ForwardContext&, \
                                       const LossConfig&, RngStream*);                        \
  template LossResult<Real> mixed_loss(const Model<Real>&, const ForwardTrace<Real>&,        \
                                       const std::vector<std::vector<int>>&,                  \
                                       const std::vector<std::vector<int>>&, ForwardContext&, \
                                       const LossConfig&);

MIXREP_INSTANTIATE_LOSSES(float)
MIXREP_INSTANTIATE_LOSSES(double)

}  // namespace mixrep
