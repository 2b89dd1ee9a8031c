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

#ifndef MIXREP_TRAINER_H_
#define MIXREP_TRAINER_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mixrep/augment.h"
#include "mixrep/dataio.h"
#include "mixrep/losses.h"
#include "mixrep/model.h"

namespace mixrep {

struct TrainConfig {
  std::size_t epochs = 30;
  double peakLR = 2e-3;
  std::size_t warmupSteps = 100;
  std::size_t accumSteps = 6;
  std::uint64_t masterSeed = 1;
  std::size_t maxElementsPerBatch = 8192;
  bool mixupEnabled = false;
  MixupConfig mixup;
  bool specAugmentEnabled = true;
  SpecAugmentConfig specAugment;
  std::size_t evalEvery = 1;
  LossConfig loss;
  double adamBeta1 = 0.9;
  double adamBeta2 = 0.98;
  double adamEps = 1e-9;
  // Global gradient-norm clip; 0 disables.
  double gradClip = 0.0;

  void validate(int encoderLayers) const;
};

double lr_at(std::size_t step, double peakLR, std::size_t warmupSteps);

std::size_t edit_distance(std::span<const int> ref, std::span<const int> hyp);

struct TokenErrorRate {
  // Mean over utterances of edits / |ref|, in percent.
  double utteranceMean = 0.0;
  // Total edits over total reference tokens, in percent.
  double corpus = 0.0;
  std::size_t utterances = 0;
  std::size_t edits = 0;
  std::size_t refTokens = 0;
};

TokenErrorRate score(const std::vector<std::vector<int>>& refs,
                     const std::vector<std::vector<int>>& hyps);

template <typename Real>
std::vector<std::vector<int>> transcribe(const Model<Real>& model, const Dataset& data,
                                         DecodeMode mode, std::size_t maxElementsPerBatch);

template <typename Real>
TokenErrorRate evaluate(const Model<Real>& model, const Dataset& data, DecodeMode mode,
                        std::size_t maxElementsPerBatch);

struct StepRecord {
  std::size_t step = 0;
  LossBreakdown loss;
  bool mixed = false;
  int layer = -1;
  double lr = 0.0;
};

struct EvalRecord {
  std::size_t epoch = 0;
  // Micro-batches completed when the evaluation ran.
  std::size_t afterStep = 0;
  double terAtt = 0.0;
  double terCtc = 0.0;
};

struct RunLog {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
  std::size_t batches = 0;
  std::size_t mixedBatches = 0;
  std::size_t updates = 0;
  std::map<int, std::size_t> layerCounts;
  std::vector<double> lambdas;
  std::size_t timeWarps = 0;
  std::size_t timeMasks = 0;
  std::size_t freqMasks = 0;
  double bestTerAtt = -1.0;
  std::size_t bestEpoch = 0;
  bool diverged = false;
  std::size_t divergedStep = 0;
  // Process CPU time; reported on the console only.
  double cpuSeconds = 0.0;

  // Counts of lambdas in `bins` equal-width bins over [0, 1].
  std::vector<std::size_t> lambda_histogram(std::size_t bins) const;
};

void write_runlog(const RunLog& log, std::ostream& out);
void write_runlog(const RunLog& log, const std::filesystem::path& path);
RunLog parse_runlog(std::istream& in);
RunLog read_runlog(const std::filesystem::path& path);

// Random streams for one micro-batch, derived from the master seed and the
// global micro-batch index.
struct BatchStreams {
  RngStream mixup;
  RngStream augment;
  RngStream dropout;
  RngStream secondaryDropout;

  static BatchStreams for_batch(std::uint64_t masterSeed, std::size_t microStep);
};

// One optimizer with accumulation. accumulate() runs forward/backward on a
// micro-batch; every accumSteps calls an Adam update is applied.
template <typename Real>
class Trainer {
 public:
  Trainer(Model<Real>& model, const TrainConfig& cfg);

  // Gradients of loss / accumSteps are added to the parameters. Raises
  // DivergenceError on a non-finite loss.
  StepRecord accumulate(const Batch& batch, const MixPlan& plan, BatchStreams& streams,
                        SpecAugmentStats* augmentStats = nullptr);

  // Applies Adam at lr_at(updateStep + 1) and clears the gradients.
  void update();

  std::size_t micro_steps() const { return microSteps_; }
  std::size_t update_steps() const { return updateSteps_; }
  bool update_due() const { return pending_ >= cfg_.accumSteps; }
  bool has_pending() const { return pending_ > 0; }

 private:
  Model<Real>& model_;
  TrainConfig cfg_;
  std::vector<std::vector<Real>> m_, v_;
  std::size_t microSteps_ = 0;
  std::size_t updateSteps_ = 0;
  std::size_t pending_ = 0;
};

struct TrainOutputs {
  // Written at the end of training when non-empty.
  std::filesystem::path bestCheckpoint;
  std::filesystem::path lastCheckpoint;
  // Progress lines; may be null.
  std::ostream* progress = nullptr;
};

// Runs the full loop. Divergence stops training and is recorded in the log.
template <typename Real>
RunLog train(Model<Real>& model, const Dataset& trainSet, const Dataset& evalSet,
             const TrainConfig& cfg, const TrainOutputs& outputs = {});

// Raises AlignmentError naming the first utterance whose target cannot be
// aligned to its subsampled length.
void check_ctc_feasible(const Dataset& data);

}  // namespace mixrep

#endif  // MIXREP_TRAINER_H_
