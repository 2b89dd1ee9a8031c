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

#ifndef MIXREP_HARNESS_H_
#define MIXREP_HARNESS_H_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mixrep/config.h"
#include "mixrep/trainer.h"

namespace mixrep {

// Files under the data directory.
struct DataLayout {
  std::filesystem::path dir;
  std::filesystem::path vocab() const { return dir / "vocab.txt"; }
  std::filesystem::path train() const { return dir / "train.tsv"; }
  std::filesystem::path eval() const { return dir / "eval.tsv"; }
};

// Files under a run directory.
struct RunLayout {
  std::filesystem::path dir;
  std::filesystem::path best() const { return dir / "best.ckpt"; }
  std::filesystem::path last() const { return dir / "last.ckpt"; }
  std::filesystem::path runlog() const { return dir / "runlog.txt"; }
  std::filesystem::path config() const { return dir / "config.txt"; }
};

struct GenDataSummary {
  std::size_t trainUtterances = 0;
  std::size_t evalUtterances = 0;
  std::size_t trainFrames = 0;
};

// Writes vocab.txt, train.tsv, eval.tsv and feats/*.mxf under data_dir().
GenDataSummary cmd_gen_data(const ExperimentConfig& cfg, std::ostream& log);

// Trains in <runDir>; 64-bit arithmetic when `deterministic`. Throws
// DivergenceError after writing the log when training diverged.
RunLog cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& runDir,
                 bool deterministic, std::ostream& log);

struct EvalReport {
  TokenErrorRate attention;
  TokenErrorRate ctc;
};

// Loads the vocabulary next to the manifest; raises ConfigError when it
// disagrees with the checkpoint. The report is written to `reportPath` when
// non-empty.
EvalReport cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest,
                    std::size_t maxElementsPerBatch, bool deterministic,
                    const std::filesystem::path& reportPath, std::ostream& log);

struct SweepRow {
  // -1 for the baseline row.
  int layer = -1;
  double terAtt = 0.0;
  double terCtc = 0.0;
  // Baseline error minus this row's error; positive is better.
  double delta = 0.0;
  bool diverged = false;
  double cpuSeconds = 0.0;
  std::size_t mixedBatches = 0;
  std::size_t batches = 0;
  std::filesystem::path runDir;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  std::vector<int> selected;
};

// Final-epoch attention token error of a run log; NaN when none was recorded.
double final_ter_att(const RunLog& log);

// S = {0, best k >= 1}, or {0} when k = 0 is best; ties go to the smaller k.
std::vector<int> select_set(const SweepReport& report);

// Baseline plus one run per k in [0, K] with S = {k}, all under
// <outputDir>/sweep. Writes sweep_report.txt and sweep_plot.dat.
SweepReport cmd_sweep_layers(const ExperimentConfig& cfg, bool deterministic, std::ostream& log);

void write_sweep_report(const SweepReport& report, const std::filesystem::path& path);
void write_sweep_plot(const SweepReport& report, const std::filesystem::path& path);

struct PreviewFiles {
  std::filesystem::path original;
  std::filesystem::path augmented;
  std::filesystem::path partner;
  std::filesystem::path mixed;
};

// Writes the utterance, its SpecAugment view and a lambda = 0.5 mix with a
// random partner under <outputDir>/preview.
PreviewFiles cmd_preview_augment(const ExperimentConfig& cfg, const std::string& utteranceId,
                                 std::ostream& log);

// Elementwise lambda * a + (1 - lambda) * b after zero-padding to the longer.
FeatureMatrix mix_features(const FeatureMatrix& a, const FeatureMatrix& b, double lambda);

}  // namespace mixrep

#endif  // MIXREP_HARNESS_H_
