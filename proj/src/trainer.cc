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

#include "mixrep/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "mixrep/checkpoint.h"
#include "mixrep/errors.h"
#include "mixrep/ops.h"

namespace mixrep {

void TrainConfig::validate(int encoderLayers) const {
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (!(peakLR > 0.0)) throw ConfigError("train.peak_lr must be > 0");
  if (warmupSteps < 1) throw ConfigError("train.warmup_steps must be >= 1");
  if (accumSteps < 1) throw ConfigError("train.accum_steps must be >= 1");
  if (evalEvery < 1) throw ConfigError("train.eval_every must be >= 1");
  if (maxElementsPerBatch < 1) throw ConfigError("train.max_elements must be >= 1");
  if (!(loss.alphaJoint >= 0.0 && loss.alphaJoint <= 1.0)) {
    throw ConfigError("train.alpha_joint must lie in [0, 1]");
  }
  if (!(loss.labelSmoothing >= 0.0 && loss.labelSmoothing <= 1.0)) {
    throw ConfigError("train.label_smoothing must lie in [0, 1]");
  }
  if (!(adamBeta1 >= 0.0 && adamBeta1 < 1.0 && adamBeta2 >= 0.0 && adamBeta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adamEps > 0.0)) throw ConfigError("Adam epsilon must be > 0");
  if (!(gradClip >= 0.0)) throw ConfigError("train.grad_clip must be >= 0");
  if (mixupEnabled) mixup.validate(encoderLayers);
}

double lr_at(std::size_t step, double peakLR, std::size_t warmupSteps) {
  if (step < 1) throw ParameterError("lr_at: step must be >= 1");
  if (warmupSteps < 1) throw ParameterError("lr_at: warmupSteps must be >= 1");
  const double s = double(step), w = double(warmupSteps);
  if (step <= warmupSteps) return peakLR * (s / w);
  return peakLR * std::sqrt(w / s);
}

std::size_t edit_distance(std::span<const int> ref, std::span<const int> hyp) {
  std::vector<std::size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
  for (std::size_t j = 0; j <= hyp.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= hyp.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

TokenErrorRate score(const std::vector<std::vector<int>>& refs,
                     const std::vector<std::vector<int>>& hyps) {
  if (refs.empty()) throw MetricError("token error rate of an empty set is undefined");
  if (refs.size() != hyps.size()) throw DimensionError("reference/hypothesis count mismatch");
  TokenErrorRate r;
  double sum = 0.0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const std::size_t e = edit_distance(refs[i], hyps[i]);
    r.edits += e;
    r.refTokens += refs[i].size();
    // An empty reference counts every inserted token as one error.
    sum += double(e) / double(std::max<std::size_t>(refs[i].size(), 1));
  }
  r.utterances = refs.size();
  r.utteranceMean = 100.0 * sum / double(refs.size());
  r.corpus = 100.0 * double(r.edits) / double(std::max<std::size_t>(r.refTokens, 1));
  return r;
}

template <typename Real>
std::vector<std::vector<int>> transcribe(const Model<Real>& model, const Dataset& data,
                                         DecodeMode mode, std::size_t maxElementsPerBatch) {
  NoGradGuard noGrad;
  std::vector<std::vector<int>> hyps(data.size());
  const SpecAugmentConfig noAugment;
  for (const auto& members : plan_batches(data, maxElementsPerBatch, 0)) {
    const Batch batch = collate(data, members);
    ForwardContext ctx;
    const ForwardTrace<Real> trace = model.encode(batch, MixPlan{}, noAugment, ctx);
    auto out = model.greedy_decode(trace.encoderOutput, trace.subsampledLengths, mode);
    for (std::size_t b = 0; b < members.size(); ++b) hyps[members[b]] = std::move(out[b]);
  }
  return hyps;
}

template <typename Real>
TokenErrorRate evaluate(const Model<Real>& model, const Dataset& data, DecodeMode mode,
                        std::size_t maxElementsPerBatch) {
  if (data.empty()) throw MetricError("cannot evaluate on an empty dataset");
  std::vector<std::vector<int>> refs;
  refs.reserve(data.size());
  for (const auto& u : data) refs.push_back(u.tokens);
  return score(refs, transcribe(model, data, mode, maxElementsPerBatch));
}

std::vector<std::size_t> RunLog::lambda_histogram(std::size_t bins) const {
  std::vector<std::size_t> h(bins, 0);
  for (double l : lambdas) {
    h[std::min(bins - 1, std::size_t(l * double(bins)))]++;
  }
  return h;
}

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

void write_step(const StepRecord& s, std::ostream& out) {
  out << "step=" << s.step << " loss=" << fmt("%.9g", s.loss.joint)
      << " ctc=" << fmt("%.9g", s.loss.ctc) << " ce=" << fmt("%.9g", s.loss.ce)
      << " lambda=" << (s.mixed ? fmt("%.17g", s.loss.lambda) : "-")
      << " layer=" << (s.mixed ? std::to_string(s.layer) : "-") << " lr=" << fmt("%.9g", s.lr)
      << '\n';
}

std::map<std::string, std::string> fields(const std::string& line, std::size_t lineNo) {
  std::map<std::string, std::string> f;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) {
      f[tok] = "";
      continue;
    }
    if (!f.emplace(tok.substr(0, eq), tok.substr(eq + 1)).second) {
      throw ParseError("duplicate field '" + tok.substr(0, eq) + "'", lineNo);
    }
  }
  return f;
}

const std::string& need(const std::map<std::string, std::string>& f, const std::string& key,
                        std::size_t lineNo) {
  auto it = f.find(key);
  if (it == f.end()) throw ParseError("missing field '" + key + "'", lineNo);
  return it->second;
}

double to_double(const std::string& s, std::size_t lineNo) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("not a number: '" + s + "'", lineNo);
  }
}

std::size_t to_size(const std::string& s, std::size_t lineNo) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw ParseError("not a count: '" + s + "'", lineNo);
  }
  return std::stoull(s);
}

}  // namespace

void write_runlog(const RunLog& log, std::ostream& out) {
  std::size_t e = 0;
  auto flushEvals = [&](std::size_t step) {
    for (; e < log.evals.size() && log.evals[e].afterStep <= step; ++e) {
      const auto& r = log.evals[e];
      out << "epoch=" << r.epoch << " ter_att=" << fmt("%.17g", r.terAtt)
          << " ter_ctc=" << fmt("%.17g", r.terCtc) << '\n';
    }
  };
  flushEvals(0);
  for (const auto& s : log.steps) {
    write_step(s, out);
    flushEvals(s.step);
  }
  flushEvals(SIZE_MAX);
  out << "batches=" << log.batches << '\n';
  out << "mixed_batches=" << log.mixedBatches << '\n';
  out << "updates=" << log.updates << '\n';
  out << "time_warps=" << log.timeWarps << " time_masks=" << log.timeMasks
      << " freq_masks=" << log.freqMasks << '\n';
  for (const auto& [k, n] : log.layerCounts) out << "layer_count k=" << k << " n=" << n << '\n';
  const auto hist = log.lambda_histogram(10);
  out << "lambda_hist bins=10 counts=";
  for (std::size_t i = 0; i < hist.size(); ++i) out << (i ? "," : "") << hist[i];
  out << '\n';
  out << "best_ter_att=" << fmt("%.17g", log.bestTerAtt) << " best_epoch=" << log.bestEpoch
      << '\n';
  if (log.diverged) out << "diverged_step=" << log.divergedStep << '\n';
}

void write_runlog(const RunLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write run log " + path.string());
  write_runlog(log, out);
}

RunLog parse_runlog(std::istream& in) {
  RunLog log;
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty()) continue;
    const auto f = fields(line, lineNo);
    if (f.count("step")) {
      StepRecord s;
      s.step = to_size(need(f, "step", lineNo), lineNo);
      s.loss.joint = to_double(need(f, "loss", lineNo), lineNo);
      s.loss.ctc = to_double(need(f, "ctc", lineNo), lineNo);
      s.loss.ce = to_double(need(f, "ce", lineNo), lineNo);
      const std::string& lam = need(f, "lambda", lineNo);
      const std::string& layer = need(f, "layer", lineNo);
      s.mixed = lam != "-";
      if (s.mixed) {
        s.loss.lambda = to_double(lam, lineNo);
        s.loss.mixed = true;
        s.loss.mixedJoint = s.loss.joint;
        s.layer = int(to_size(layer, lineNo));
        log.lambdas.push_back(s.loss.lambda);
      }
      s.lr = to_double(need(f, "lr", lineNo), lineNo);
      log.steps.push_back(s);
    } else if (f.count("epoch")) {
      EvalRecord r;
      r.epoch = to_size(need(f, "epoch", lineNo), lineNo);
      r.terAtt = to_double(need(f, "ter_att", lineNo), lineNo);
      r.terCtc = to_double(need(f, "ter_ctc", lineNo), lineNo);
      r.afterStep = log.steps.empty() ? 0 : log.steps.back().step;
      log.evals.push_back(r);
    } else if (f.count("batches")) {
      log.batches = to_size(f.at("batches"), lineNo);
    } else if (f.count("mixed_batches")) {
      log.mixedBatches = to_size(f.at("mixed_batches"), lineNo);
    } else if (f.count("updates")) {
      log.updates = to_size(f.at("updates"), lineNo);
    } else if (f.count("time_masks")) {
      log.timeWarps = to_size(need(f, "time_warps", lineNo), lineNo);
      log.timeMasks = to_size(f.at("time_masks"), lineNo);
      log.freqMasks = to_size(need(f, "freq_masks", lineNo), lineNo);
    } else if (f.count("layer_count")) {
      log.layerCounts[int(to_size(need(f, "k", lineNo), lineNo))] =
          to_size(need(f, "n", lineNo), lineNo);
    } else if (f.count("lambda_hist")) {
      // Derived from the step lines.
    } else if (f.count("best_ter_att")) {
      log.bestTerAtt = to_double(f.at("best_ter_att"), lineNo);
      log.bestEpoch = to_size(need(f, "best_epoch", lineNo), lineNo);
    } else if (f.count("diverged_step")) {
      log.diverged = true;
      log.divergedStep = to_size(f.at("diverged_step"), lineNo);
    } else {
      throw ParseError("unrecognized run log line", lineNo);
    }
  }
  return log;
}

RunLog read_runlog(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open run log " + path.string());
  return parse_runlog(in);
}

BatchStreams BatchStreams::for_batch(std::uint64_t masterSeed, std::size_t microStep) {
  const RngStream base = RngStream(masterSeed).derive("batch").derive(std::uint64_t(microStep));
  return {base.derive("mixup"), base.derive("augment"), base.derive("dropout"),
          base.derive("dropout-secondary")};
}

template <typename Real>
Trainer<Real>::Trainer(Model<Real>& model, const TrainConfig& cfg) : model_(model), cfg_(cfg) {
  for (const auto& p : model_.parameters()) {
    m_.emplace_back(p.tensor.numel(), Real(0));
    v_.emplace_back(p.tensor.numel(), Real(0));
  }
}

template <typename Real>
StepRecord Trainer<Real>::accumulate(const Batch& batch, const MixPlan& plan,
                                     BatchStreams& streams, SpecAugmentStats* augmentStats) {
  ForwardContext ctx;
  ctx.training = true;
  ctx.dropout = &streams.dropout;
  ctx.secondaryDropout = &streams.secondaryDropout;
  ctx.augment = cfg_.specAugmentEnabled ? &streams.augment : nullptr;
  LossResult<Real> result;
  SpecAugmentStats stats;
  try {
    const ForwardTrace<Real> trace = model_.encode(batch, plan, cfg_.specAugment, ctx);
    stats = trace.augmentStats;
    result = plan.apply ? mixed_loss(model_, trace, batch.labels,
                                     permute_labels(batch.labels, plan.permutation), ctx, cfg_.loss)
                        : plain_loss(model_, trace, batch.labels, ctx, cfg_.loss);
  } catch (const NumericError& e) {
    throw DivergenceError(std::string("non-finite forward pass: ") + e.what(), ++microSteps_);
  }
  ++microSteps_;
  if (!std::isfinite(result.breakdown.joint)) throw DivergenceError("non-finite loss", microSteps_);
  const Tensor<Real> scaled =
      cfg_.accumSteps == 1 ? result.loss : scale(result.loss, Real(1.0 / double(cfg_.accumSteps)));
  scaled.backward();
  ++pending_;
  if (augmentStats) *augmentStats = std::move(stats);

  StepRecord rec;
  rec.step = microSteps_;
  rec.loss = result.breakdown;
  rec.mixed = plan.apply;
  rec.layer = plan.apply ? plan.layerIndex : -1;
  rec.lr = lr_at(updateSteps_ + 1, cfg_.peakLR, cfg_.warmupSteps);
  return rec;
}

template <typename Real>
void Trainer<Real>::update() {
  auto& params = model_.parameters();
  const std::size_t step = ++updateSteps_;
  const double lr = lr_at(step, cfg_.peakLR, cfg_.warmupSteps);
  double clipScale = 1.0;
  if (cfg_.gradClip > 0.0) {
    double sq = 0.0;
    for (const auto& p : params) {
      for (Real g : p.tensor.grad()) sq += double(g) * double(g);
    }
    const double norm = std::sqrt(sq);
    if (norm > cfg_.gradClip) clipScale = cfg_.gradClip / norm;
  }
  const double b1 = cfg_.adamBeta1, b2 = cfg_.adamBeta2;
  const double c1 = 1.0 - std::pow(b1, double(step));
  const double c2 = 1.0 - std::pow(b2, double(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<Real>& t = params[i].tensor;
    if (!t.has_grad()) continue;
    auto data = t.mutable_data();
    const auto grad = t.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = double(grad[j]) * clipScale;
      m[j] = Real(b1 * double(m[j]) + (1.0 - b1) * g);
      v[j] = Real(b2 * double(v[j]) + (1.0 - b2) * g * g);
      const double mhat = double(m[j]) / c1;
      const double vhat = double(v[j]) / c2;
      data[j] = Real(double(data[j]) - lr * mhat / (std::sqrt(vhat) + cfg_.adamEps));
    }
  }
  model_.zero_grad();
  pending_ = 0;
}

namespace {

template <typename Real>
std::vector<std::vector<Real>> snapshot(const Model<Real>& model) {
  std::vector<std::vector<Real>> out;
  for (const auto& p : model.parameters()) out.push_back(p.tensor.values());
  return out;
}

template <typename Real>
void save_snapshot(const ModelConfig& cfg, const std::vector<std::vector<Real>>& values,
                   const std::filesystem::path& path) {
  Model<Real> m(cfg);
  auto& params = m.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(values[i].begin(), values[i].end(), params[i].tensor.mutable_data().begin());
  }
  save_checkpoint(m, path);
}

}  // namespace

template <typename Real>
RunLog train(Model<Real>& model, const Dataset& trainSet, const Dataset& evalSet,
             const TrainConfig& cfg, const TrainOutputs& outputs) {
  cfg.validate(int(model.config().encoderLayers));
  if (trainSet.empty()) throw ConfigError("training set is empty");
  for (const auto* set : {&trainSet, &evalSet}) {
    for (const auto& u : *set) {
      if (u.features.cols != model.config().featureDim) {
        throw ConfigError("utterance " + u.id + " has feature dim " +
                          std::to_string(u.features.cols) + ", model expects " +
                          std::to_string(model.config().featureDim));
      }
      for (int t : u.tokens) {
        if (t <= 0 || t >= int(model.config().vocabSize) - 1) {
          throw ConfigError("utterance " + u.id + " has token " + std::to_string(t) +
                            " outside the model vocabulary");
        }
      }
    }
  }
  check_ctc_feasible(trainSet);

  const std::clock_t start = std::clock();
  Trainer<Real> trainer(model, cfg);
  RunLog log;
  std::vector<std::vector<Real>> best;
  for (std::size_t epoch = 1; epoch <= cfg.epochs && !log.diverged; ++epoch) {
    const auto plan = plan_batches(trainSet, cfg.maxElementsPerBatch,
                                   mix_seed(cfg.masterSeed, std::uint64_t(epoch)));
    for (const auto& members : plan) {
      const Batch batch = collate(trainSet, members);
      BatchStreams streams = BatchStreams::for_batch(cfg.masterSeed, trainer.micro_steps());
      const MixPlan mix = cfg.mixupEnabled
                              ? sample_plan(cfg.mixup, batch.batchSize, streams.mixup)
                              : MixPlan{};
      SpecAugmentStats stats;
      StepRecord rec;
      try {
        rec = trainer.accumulate(batch, mix, streams, &stats);
      } catch (const DivergenceError& e) {
        log.diverged = true;
        log.divergedStep = e.step();
        if (outputs.progress) *outputs.progress << "diverged: " << e.what() << '\n';
        break;
      }
      ++log.batches;
      log.timeWarps += stats.timeWarps;
      log.timeMasks += stats.timeMasks;
      log.freqMasks += stats.freqMasks;
      if (mix.apply) {
        ++log.mixedBatches;
        ++log.layerCounts[mix.layerIndex];
        log.lambdas.push_back(mix.lambda);
      }
      log.steps.push_back(rec);
      if (trainer.update_due()) trainer.update();
    }
    if (log.diverged) break;
    const bool last = epoch == cfg.epochs;
    if (last && trainer.has_pending()) trainer.update();
    if (epoch % cfg.evalEvery == 0 || last) {
      EvalRecord r;
      r.epoch = epoch;
      r.afterStep = trainer.micro_steps();
      if (!evalSet.empty()) {
        r.terAtt = evaluate(model, evalSet, DecodeMode::kAttention, cfg.maxElementsPerBatch)
                       .utteranceMean;
        r.terCtc =
            evaluate(model, evalSet, DecodeMode::kCtc, cfg.maxElementsPerBatch).utteranceMean;
      }
      log.evals.push_back(r);
      if (log.bestTerAtt < 0.0 || r.terAtt < log.bestTerAtt) {
        log.bestTerAtt = r.terAtt;
        log.bestEpoch = epoch;
        best = snapshot(model);
      }
      if (outputs.progress) {
        const double avg = [&] {
          double s = 0.0;
          std::size_t n = 0;
          for (auto it = log.steps.rbegin(); it != log.steps.rend() && n < plan.size(); ++it, ++n) {
            s += it->loss.joint;
          }
          return n ? s / double(n) : 0.0;
        }();
        *outputs.progress << "epoch " << epoch << " loss " << fmt("%.4f", avg) << " ter_att "
                          << fmt("%.2f", r.terAtt) << " ter_ctc " << fmt("%.2f", r.terCtc)
                          << " cpu " << fmt("%.1f", double(std::clock() - start) / CLOCKS_PER_SEC)
                          << "s" << std::endl;
      }
    }
  }
  log.updates = trainer.update_steps();
  log.cpuSeconds = double(std::clock() - start) / CLOCKS_PER_SEC;
  if (!outputs.lastCheckpoint.empty()) save_checkpoint(model, outputs.lastCheckpoint);
  if (!outputs.bestCheckpoint.empty()) {
    if (best.empty()) {
      save_checkpoint(model, outputs.bestCheckpoint);
    } else {
      save_snapshot(model.config(), best, outputs.bestCheckpoint);
    }
  }
  return log;
}

void check_ctc_feasible(const Dataset& data) {
  for (const auto& u : data) {
    const std::size_t frames = subsampled_length(u.features.rows);
    const std::size_t need = ctc_min_frames(u.tokens);
    if (frames == 0 || frames < need) {
      throw AlignmentError("utterance " + u.id + ": " + std::to_string(u.features.rows) +
                           " frames subsample to " + std::to_string(frames) +
                           ", CTC needs " + std::to_string(need));
    }
  }
}

#define MIXREP_INSTANTIATE_TRAINER(Real)                                                     \
  template class Trainer<Real>;                                                              \
  template std::vector<std::vector<int>> transcribe(const Model<Real>&, const Dataset&,      \
                                                    DecodeMode, std::size_t);                \
  template TokenErrorRate evaluate(const Model<Real>&, const Dataset&, DecodeMode,           \
                                   std::size_t);                                             \
  template RunLog train(Model<Real>&, const Dataset&, const Dataset&, const TrainConfig&,    \
                        const TrainOutputs&);

MIXREP_INSTANTIATE_TRAINER(float)
MIXREP_INSTANTIATE_TRAINER(double)

}  // namespace mixrep
