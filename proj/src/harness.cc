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

#include "mixrep/harness.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "mixrep/checkpoint.h"
#include "mixrep/errors.h"

namespace mixrep {
namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

struct LoadedData {
  Vocabulary vocab;
  Dataset train;
  Dataset eval;
};

LoadedData load_data(const ExperimentConfig& cfg) {
  const DataLayout layout{cfg.data_dir()};
  if (!std::filesystem::exists(layout.train())) {
    throw IoError("no dataset at " + layout.dir.string() + "; run gen-data first");
  }
  LoadedData d;
  d.vocab = load_vocabulary(layout.vocab());
  if (d.vocab.size() != cfg.model.vocabSize) {
    throw ConfigError("vocabulary " + layout.vocab().string() + " has " +
                      std::to_string(d.vocab.size()) + " entries, config expects " +
                      std::to_string(cfg.model.vocabSize));
  }
  d.train = load_manifest(layout.train(), d.vocab);
  d.eval = load_manifest(layout.eval(), d.vocab);
  return d;
}

template <typename Real>
RunLog train_run(const ExperimentConfig& cfg, const LoadedData& data, const RunLayout& run,
                 std::ostream& log) {
  RngStreams streams = RngStreams::from_master(cfg.train.masterSeed);
  Model<Real> model(cfg.model, streams.init);
  TrainOutputs outputs;
  outputs.bestCheckpoint = run.best();
  outputs.lastCheckpoint = run.last();
  outputs.progress = &log;
  return train(model, data.train, data.eval, cfg.train, outputs);
}

}  // namespace

GenDataSummary cmd_gen_data(const ExperimentConfig& cfg, std::ostream& log) {
  SynthConfig synth = cfg.synth;
  synth.numUtterances = cfg.trainUtterances + cfg.evalUtterances;
  Dataset all = gen_synthetic(synth);
  Dataset evalSet(std::make_move_iterator(all.begin() + std::ptrdiff_t(cfg.trainUtterances)),
                  std::make_move_iterator(all.end()));
  all.resize(cfg.trainUtterances);
  check_ctc_feasible(all);
  check_ctc_feasible(evalSet);

  const DataLayout layout{cfg.data_dir()};
  std::filesystem::create_directories(layout.dir);
  const Vocabulary vocab = Vocabulary::synthetic(cfg.synth.vocabSize);
  write_vocabulary(vocab, layout.vocab());
  write_manifest(all, vocab, layout.train(), "feats");
  write_manifest(evalSet, vocab, layout.eval(), "feats");

  GenDataSummary s;
  s.trainUtterances = all.size();
  s.evalUtterances = evalSet.size();
  for (const auto& u : all) s.trainFrames += u.features.rows;
  log << "wrote " << s.trainUtterances << " train and " << s.evalUtterances
      << " eval utterances (" << s.trainFrames << " train frames) to " << layout.dir.string()
      << '\n';
  return s;
}

RunLog cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& runDir,
                 bool deterministic, std::ostream& log) {
  const LoadedData data = load_data(cfg);
  const RunLayout run{runDir};
  std::filesystem::create_directories(run.dir);
  {
    std::ofstream c(run.config(), std::ios::trunc);
    if (!c) throw IoError("cannot write " + run.config().string());
    c << dump_config(cfg);
  }
  log << "training " << mode_name(cfg.mode) << " in " << run.dir.string()
      << (deterministic ? " (64-bit)" : "") << '\n';
  const RunLog result = deterministic ? train_run<double>(cfg, data, run, log)
                                      : train_run<float>(cfg, data, run, log);
  write_runlog(result, run.runlog());
  log << "batches " << result.batches << " mixed " << result.mixedBatches << " best ter_att "
      << fmt("%.2f", result.bestTerAtt) << " cpu " << fmt("%.1f", result.cpuSeconds) << "s\n";
  if (result.diverged) {
    throw DivergenceError("training diverged at batch " + std::to_string(result.divergedStep),
                          result.divergedStep);
  }
  return result;
}

namespace {

template <typename Real>
EvalReport eval_with(const std::filesystem::path& checkpoint, const Dataset& data,
                     std::size_t maxElements) {
  const Model<Real> model = load_checkpoint<Real>(checkpoint);
  return {evaluate(model, data, DecodeMode::kAttention, maxElements),
          evaluate(model, data, DecodeMode::kCtc, maxElements)};
}

}  // namespace

EvalReport cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest,
                    std::size_t maxElementsPerBatch, bool deterministic,
                    const std::filesystem::path& reportPath, std::ostream& log) {
  const ModelConfig mc = read_checkpoint_config(checkpoint);
  const Vocabulary vocab = load_vocabulary(manifest.parent_path() / "vocab.txt");
  if (vocab.size() != mc.vocabSize) {
    throw ConfigError("checkpoint expects " + std::to_string(mc.vocabSize) +
                      " vocabulary entries, manifest vocabulary has " +
                      std::to_string(vocab.size()));
  }
  const Dataset data = load_manifest(manifest, vocab);
  if (data.empty()) throw MetricError("manifest " + manifest.string() + " is empty");
  const EvalReport r = deterministic ? eval_with<double>(checkpoint, data, maxElementsPerBatch)
                                     : eval_with<float>(checkpoint, data, maxElementsPerBatch);
  std::ostringstream text;
  text << "utterances=" << r.attention.utterances << '\n'
       << "ter_att=" << fmt("%.17g", r.attention.utteranceMean)
       << " ter_att_corpus=" << fmt("%.17g", r.attention.corpus) << '\n'
       << "ter_ctc=" << fmt("%.17g", r.ctc.utteranceMean)
       << " ter_ctc_corpus=" << fmt("%.17g", r.ctc.corpus) << '\n';
  log << text.str();
  if (!reportPath.empty()) {
    std::ofstream out(reportPath, std::ios::trunc);
    if (!out) throw IoError("cannot write " + reportPath.string());
    out << text.str();
  }
  return r;
}

double final_ter_att(const RunLog& log) {
  return log.evals.empty() ? std::numeric_limits<double>::quiet_NaN() : log.evals.back().terAtt;
}

std::vector<int> select_set(const SweepReport& report) {
  const SweepRow* best = nullptr;
  const SweepRow* bestDeep = nullptr;
  for (const auto& row : report.rows) {
    if (row.layer < 0 || row.diverged || std::isnan(row.terAtt)) continue;
    auto better = [&](const SweepRow* cur) {
      return !cur || row.terAtt < cur->terAtt ||
             (row.terAtt == cur->terAtt && row.layer < cur->layer);
    };
    if (better(best)) best = &row;
    if (row.layer >= 1 && better(bestDeep)) bestDeep = &row;
  }
  if (!best) throw MetricError("sweep report has no completed mixup runs");
  if (best->layer == 0 || !bestDeep) return {0};
  return {0, bestDeep->layer};
}

void write_sweep_report(const SweepReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "run\tter_att\tter_ctc\tdelta\tmixed_batches\tbatches\tstatus\n";
  for (const auto& r : report.rows) {
    out << (r.layer < 0 ? std::string("baseline") : "k=" + std::to_string(r.layer)) << '\t'
        << fmt("%.17g", r.terAtt) << '\t' << fmt("%.17g", r.terCtc) << '\t'
        << fmt("%.17g", r.delta) << '\t' << r.mixedBatches << '\t' << r.batches << '\t'
        << (r.diverged ? "diverged" : "ok") << '\n';
  }
  out << "selected_set=";
  for (std::size_t i = 0; i < report.selected.size(); ++i) {
    out << (i ? "," : "") << report.selected[i];
  }
  out << '\n';
}

void write_sweep_plot(const SweepReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# k\tdelta_ter_att\n";
  for (const auto& r : report.rows) {
    if (r.layer >= 0) out << r.layer << '\t' << fmt("%.17g", r.delta) << '\n';
  }
}

SweepReport cmd_sweep_layers(const ExperimentConfig& cfg, bool deterministic, std::ostream& log) {
  const std::filesystem::path root = cfg.outputDir / "sweep";
  std::filesystem::create_directories(root);
  SweepReport report;
  auto run_one = [&](ExperimentConfig sub, int layer) {
    SweepRow row;
    row.layer = layer;
    row.runDir = root / (layer < 0 ? std::string("baseline") : "k" + std::to_string(layer));
    RunLog rl;
    try {
      rl = cmd_train(sub, row.runDir, deterministic, log);
    } catch (const DivergenceError&) {
      rl = read_runlog(RunLayout{row.runDir}.runlog());
      row.diverged = true;
    }
    row.terAtt = final_ter_att(rl);
    row.terCtc = rl.evals.empty() ? std::numeric_limits<double>::quiet_NaN()
                                  : rl.evals.back().terCtc;
    row.cpuSeconds = rl.cpuSeconds;
    row.mixedBatches = rl.mixedBatches;
    row.batches = rl.batches;
    report.rows.push_back(row);
  };

  ExperimentConfig base = cfg;
  base.mode = ExperimentMode::kBaseline;
  base.layersExplicit = false;
  base.validate();
  run_one(base, -1);

  const ExperimentMode mixMode =
      cfg.mode == ExperimentMode::kBaseline ? ExperimentMode::kMixRepTimeEnhanced : cfg.mode;
  for (int k = 0; k <= int(cfg.model.encoderLayers); ++k) {
    ExperimentConfig sub = cfg;
    sub.mode = mixMode;
    sub.train.mixup.layerSet = {k};
    sub.layersExplicit = true;
    sub.validate();
    run_one(sub, k);
  }
  const double baseTer = report.rows.front().terAtt;
  for (auto& r : report.rows) r.delta = baseTer - r.terAtt;
  try {
    report.selected = select_set(report);
  } catch (const MetricError& e) {
    log << "no layer selected: " << e.what() << '\n';
  }
  write_sweep_report(report, root / "sweep_report.txt");
  write_sweep_plot(report, root / "sweep_plot.dat");
  for (const auto& r : report.rows) {
    log << (r.layer < 0 ? std::string("baseline") : "k=" + std::to_string(r.layer))
        << " ter_att " << fmt("%.2f", r.terAtt) << " delta " << fmt("%+.2f", r.delta)
        << (r.diverged ? " diverged" : "") << '\n';
  }
  return report;
}

FeatureMatrix mix_features(const FeatureMatrix& a, const FeatureMatrix& b, double lambda) {
  if (a.cols != b.cols) throw DimensionError("cannot mix feature matrices of different width");
  FeatureMatrix out(std::max(a.rows, b.rows), a.cols);
  const float la = float(lambda), lb = float(1.0 - lambda);
  for (std::size_t t = 0; t < out.rows; ++t) {
    for (std::size_t c = 0; c < out.cols; ++c) {
      const float va = t < a.rows ? a.at(t, c) : 0.0f;
      const float vb = t < b.rows ? b.at(t, c) : 0.0f;
      out.at(t, c) = la * va + lb * vb;
    }
  }
  return out;
}

PreviewFiles cmd_preview_augment(const ExperimentConfig& cfg, const std::string& utteranceId,
                                 std::ostream& log) {
  const LoadedData data = load_data(cfg);
  const Dataset* set = nullptr;
  std::size_t index = 0;
  for (const Dataset* d : {&data.train, &data.eval}) {
    for (std::size_t i = 0; i < d->size() && !set; ++i) {
      if ((*d)[i].id == utteranceId) {
        set = d;
        index = i;
      }
    }
  }
  if (!set) throw InputError("unknown utterance id '" + utteranceId + "'");
  const Utterance& utt = (*set)[index];

  RngStream rng = RngStream(cfg.train.masterSeed).derive("preview").derive(utteranceId);
  const FeatureMatrix augmented =
      cfg.train.specAugmentEnabled ? spec_augment(utt.features, utt.features.rows,
                                                  cfg.train.specAugment, rng)
                                   : utt.features;
  std::size_t partnerIndex = index;
  if (set->size() > 1) {
    partnerIndex = std::size_t(rng.uniform_int(0, std::int64_t(set->size()) - 2));
    if (partnerIndex >= index) ++partnerIndex;
  }
  const Utterance& partner = (*set)[partnerIndex];

  const std::filesystem::path dir = cfg.outputDir / "preview";
  std::filesystem::create_directories(dir);
  PreviewFiles files{dir / (utt.id + "_original.mxf"), dir / (utt.id + "_specaug.mxf"),
                     dir / (utt.id + "_partner_" + partner.id + ".mxf"),
                     dir / (utt.id + "_mix050.mxf")};
  write_features(utt.features, files.original);
  write_features(augmented, files.augmented);
  write_features(partner.features, files.partner);
  write_features(mix_features(utt.features, partner.features, 0.5), files.mixed);
  log << "preview of " << utt.id << " (partner " << partner.id << ") written to "
      << dir.string() << '\n';
  return files;
}

}  // namespace mixrep
