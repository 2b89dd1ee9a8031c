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

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "mixrep/checkpoint.h"
#include "mixrep/config.h"
#include "mixrep/errors.h"
#include "mixrep/harness.h"

namespace mixrep {
namespace {

namespace fs = std::filesystem;

const char* kTinyConfig = R"(# tiny experiment
mode = mixrep-time-enhanced
synth.vocab_size = 6
synth.train_utterances = 12
synth.eval_utterances = 4
synth.tokens_min = 2
synth.tokens_max = 3
synth.frames_per_token_min = 8
synth.frames_per_token_max = 10
synth.feature_dim = 6
synth.noise_std = 0.1
synth.seed = 3
model.dim = 8
model.encoder_layers = 2
model.decoder_layers = 1
model.heads = 2
model.ffn_dim = 12
model.conv_kernel = 3
model.subsample_channels = 2
model.max_target_length = 16
model.dropout = 0.1
train.epochs = 2
train.peak_lr = 0.002
train.warmup_steps = 4
train.accum_steps = 1
train.seed = 1
train.max_elements = 600
mixup.alpha = 2
mixup.tau = 0.5
mixup.layers = 0, 2
specaug.time_warp_window = 2
specaug.num_freq_masks = 1
specaug.freq_mask_width = 2
specaug.num_time_masks = 1
specaug.time_mask_width = 3
)";

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mixrep_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig tiny_config(const fs::path& out) {
  std::istringstream in(kTinyConfig);
  ExperimentConfig cfg = parse_config(in);
  cfg.outputDir = out;
  cfg.validate();
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(ConfigTest, ParsesEveryField) {
  const ExperimentConfig cfg = tiny_config("out");
  EXPECT_EQ(cfg.mode, ExperimentMode::kMixRepTimeEnhanced);
  EXPECT_EQ(cfg.synth.vocabSize, 6u);
  EXPECT_EQ(cfg.trainUtterances, 12u);
  EXPECT_EQ(cfg.evalUtterances, 4u);
  EXPECT_EQ(cfg.model.featureDim, 6u);
  EXPECT_EQ(cfg.model.vocabSize, 6u);
  EXPECT_EQ(cfg.model.encoderLayers, 2u);
  EXPECT_EQ(cfg.train.mixup.layerSet, (std::vector<int>{0, 2}));
  EXPECT_EQ(cfg.train.mixup.tau, 0.5);
  EXPECT_EQ(cfg.train.specAugment.timeMaskWidth, 3u);
  EXPECT_TRUE(cfg.train.mixupEnabled);
  EXPECT_TRUE(cfg.train.specAugment.enabledTime);
  EXPECT_EQ(cfg.data_dir(), fs::path("out") / "data");
}

TEST(ConfigTest, DumpRoundTrips) {
  const ExperimentConfig cfg = tiny_config("out");
  const std::string dumped = dump_config(cfg);
  std::istringstream in(dumped);
  ExperimentConfig again = parse_config(in);
  again.validate();
  EXPECT_EQ(dump_config(again), dumped);
}

TEST(ConfigTest, RejectsUnknownKeysAndBadValues) {
  std::istringstream unknown("model.dimension = 8\n");
  EXPECT_THROW(parse_config(unknown), ConfigError);
  std::istringstream badNumber("model.dim = eight\n");
  EXPECT_THROW(parse_config(badNumber), ConfigError);
  std::istringstream noEquals("model.dim 8\n");
  EXPECT_THROW(parse_config(noEquals), ConfigError);
  std::istringstream badMode("mode = mixspeech\n");
  EXPECT_THROW(parse_config(badMode), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/mixrep.conf"), IoError);
}

TEST(ConfigTest, ModeContracts) {
  ExperimentConfig cfg = tiny_config("out");
  cfg.mode = ExperimentMode::kMixRepBasic;
  cfg.validate();
  EXPECT_TRUE(cfg.train.mixupEnabled);
  EXPECT_FALSE(cfg.train.specAugment.enabledTime);
  EXPECT_TRUE(cfg.train.specAugment.enabledFreq);

  cfg.mode = ExperimentMode::kBaseline;
  cfg.validate();
  EXPECT_FALSE(cfg.train.mixupEnabled);
  EXPECT_TRUE(cfg.train.specAugment.enabledTime);
  ASSERT_EQ(cfg.warnings.size(), 1u);

  for (auto mode : {ExperimentMode::kBaseline, ExperimentMode::kMixRepBasic,
                    ExperimentMode::kMixRepTimeEnhanced}) {
    EXPECT_EQ(parse_mode(mode_name(mode)), mode);
  }
}

TEST(ConfigTest, ValidationRules) {
  ExperimentConfig cfg = tiny_config("out");
  set_config_value(cfg, "mixup.layers", "0,3");
  EXPECT_THROW(cfg.validate(), ConfigError);

  cfg = tiny_config("out");
  set_config_value(cfg, "mixup.tau", "0");
  EXPECT_THROW(cfg.validate(), ConfigError);
  set_config_value(cfg, "mode", "baseline");
  EXPECT_NO_THROW(cfg.validate());

  cfg = tiny_config("out");
  set_config_value(cfg, "model.heads", "3");
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(SelectSetTest, PaperSelectionRule) {
  auto report = [](std::vector<double> ters) {
    SweepReport r;
    r.rows.push_back({-1, 10.0});
    for (std::size_t k = 0; k < ters.size(); ++k) r.rows.push_back({int(k), ters[k]});
    return r;
  };
  std::vector<double> five(12, 9.0);
  five[5] = 7.0;
  EXPECT_EQ(select_set(report(five)), (std::vector<int>{0, 5}));
  std::vector<double> nine(13, 9.0);
  nine[9] = 7.2;
  EXPECT_EQ(select_set(report(nine)), (std::vector<int>{0, 9}));
  EXPECT_EQ(select_set(report({6.0, 7.0, 8.0})), (std::vector<int>{0}));
  EXPECT_EQ(select_set(report({8.0, 7.0, 9.0, 7.0})), (std::vector<int>{0, 1}));
  EXPECT_EQ(select_set(report({7.0, 8.0, 7.0})), (std::vector<int>{0}));
}

TEST(SelectSetTest, DivergedRowsAreSkipped) {
  SweepReport r;
  r.rows.push_back({-1, 10.0});
  r.rows.push_back({0, 9.0});
  SweepRow bad{1, std::nan("")};
  bad.diverged = true;
  r.rows.push_back(bad);
  r.rows.push_back({2, 8.0});
  EXPECT_EQ(select_set(r), (std::vector<int>{0, 2}));
}

TEST(GenDataTest, WritesIdempotentDataset) {
  const fs::path out = fresh_dir("gen");
  const ExperimentConfig cfg = tiny_config(out);
  std::ostringstream log;
  const GenDataSummary s = cmd_gen_data(cfg, log);
  EXPECT_EQ(s.trainUtterances, 12u);
  EXPECT_EQ(s.evalUtterances, 4u);
  const DataLayout layout{cfg.data_dir()};
  std::size_t featFiles = 0;
  for (const auto& e : fs::directory_iterator(cfg.data_dir() / "feats")) {
    featFiles += e.path().extension() == ".mxf";
  }
  EXPECT_EQ(featFiles, 16u);
  const std::string train = slurp(layout.train()), eval = slurp(layout.eval());
  const std::string vocab = slurp(layout.vocab());

  const Vocabulary v = load_vocabulary(layout.vocab());
  EXPECT_EQ(v.size(), 6u);
  const Dataset loaded = load_manifest(layout.train(), v);
  EXPECT_EQ(loaded.size(), 12u);

  cmd_gen_data(cfg, log);
  EXPECT_EQ(slurp(layout.train()), train);
  EXPECT_EQ(slurp(layout.eval()), eval);
  EXPECT_EQ(slurp(layout.vocab()), vocab);
  fs::remove_all(out);
}

class RunTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    out_ = new fs::path(fresh_dir("run"));
    cfg_ = new ExperimentConfig(tiny_config(*out_));
    std::ostringstream log;
    cmd_gen_data(*cfg_, log);
  }
  static void TearDownTestSuite() {
    fs::remove_all(*out_);
    delete cfg_;
    delete out_;
  }
  static fs::path* out_;
  static ExperimentConfig* cfg_;
};
fs::path* RunTest::out_ = nullptr;
ExperimentConfig* RunTest::cfg_ = nullptr;

TEST_F(RunTest, TrainWritesArtifactsAndEvalReproducesBest) {
  const RunLayout run{*out_ / "run"};
  std::ostringstream log;
  const RunLog trained = cmd_train(*cfg_, run.dir, false, log);
  for (const auto& p : {run.best(), run.last(), run.runlog(), run.config()}) {
    EXPECT_TRUE(fs::exists(p)) << p;
  }
  const RunLog fromDisk = read_runlog(run.runlog());
  EXPECT_EQ(fromDisk.bestTerAtt, trained.bestTerAtt);

  const EvalReport report = cmd_eval(run.best(), DataLayout{cfg_->data_dir()}.eval(),
                                     cfg_->train.maxElementsPerBatch, false,
                                     run.dir / "eval.txt", log);
  EXPECT_EQ(report.attention.utteranceMean, trained.bestTerAtt);
  EXPECT_TRUE(fs::exists(run.dir / "eval.txt"));
}

TEST_F(RunTest, DeterministicTrainingIsRepeatable) {
  std::ostringstream log;
  cmd_train(*cfg_, *out_ / "det_a", true, log);
  cmd_train(*cfg_, *out_ / "det_b", true, log);
  EXPECT_EQ(slurp(*out_ / "det_a" / "runlog.txt"), slurp(*out_ / "det_b" / "runlog.txt"));
  EXPECT_EQ(slurp(*out_ / "det_a" / "last.ckpt"), slurp(*out_ / "det_b" / "last.ckpt"));
}

TEST_F(RunTest, ModeContractsShowInRunLog) {
  std::ostringstream log;
  ExperimentConfig basic = *cfg_;
  basic.mode = ExperimentMode::kMixRepBasic;
  basic.validate();
  const RunLog b = cmd_train(basic, *out_ / "basic", true, log);
  EXPECT_EQ(b.timeMasks, 0u);
  EXPECT_EQ(b.timeWarps, 0u);
  EXPECT_GT(b.freqMasks, 0u);

  ExperimentConfig base = *cfg_;
  base.mode = ExperimentMode::kBaseline;
  base.validate();
  const RunLog r = cmd_train(base, *out_ / "baseline", true, log);
  EXPECT_EQ(r.mixedBatches, 0u);
  EXPECT_GT(r.timeMasks, 0u);
}

TEST_F(RunTest, EvalErrors) {
  std::ostringstream log;
  const RunLayout run{*out_ / "eval_errors"};
  ExperimentConfig one = *cfg_;
  one.train.epochs = 1;
  cmd_train(one, run.dir, false, log);
  const DataLayout data{cfg_->data_dir()};

  const fs::path empty = *out_ / "data" / "empty.tsv";
  std::ofstream(empty).close();
  EXPECT_THROW(cmd_eval(run.best(), empty, 600, false, {}, log), MetricError);

  std::string bytes = slurp(run.best());
  bytes[0] = 'Z';
  const fs::path corrupt = run.dir / "corrupt.ckpt";
  std::ofstream(corrupt, std::ios::binary) << bytes;
  EXPECT_THROW(cmd_eval(corrupt, data.eval(), 600, false, {}, log), FormatError);

  ModelConfig wrongVocab = read_checkpoint_config(run.best());
  wrongVocab.vocabSize = 7;
  RngStream init(1);
  save_checkpoint(Model<float>(wrongVocab, init), run.dir / "wrong.ckpt");
  EXPECT_THROW(cmd_eval(run.dir / "wrong.ckpt", data.eval(), 600, false, {}, log), ConfigError);
}

TEST_F(RunTest, SweepReportIsComplete) {
  std::ostringstream log;
  ExperimentConfig sweep = *cfg_;
  sweep.train.epochs = 1;
  const SweepReport report = cmd_sweep_layers(sweep, true, log);
  ASSERT_EQ(report.rows.size(), 4u);
  EXPECT_EQ(report.rows[0].layer, -1);
  const RunLog baseLog = read_runlog(report.rows[0].runDir / "runlog.txt");
  const double base = final_ter_att(baseLog);
  EXPECT_EQ(baseLog.mixedBatches, 0u);
  for (std::size_t i = 1; i < report.rows.size(); ++i) {
    const SweepRow& row = report.rows[i];
    EXPECT_EQ(row.layer, int(i) - 1);
    const RunLog runLog = read_runlog(row.runDir / "runlog.txt");
    EXPECT_NEAR(row.delta, base - final_ter_att(runLog), 1e-6);
    for (const auto& [k, n] : runLog.layerCounts) EXPECT_EQ(k, row.layer);
    EXPECT_EQ(runLog.batches, baseLog.batches);
  }
  EXPECT_EQ(report.selected, select_set(report));
  EXPECT_TRUE(fs::exists(*out_ / "sweep" / "sweep_report.txt"));
  std::ifstream plot(*out_ / "sweep" / "sweep_plot.dat");
  std::size_t dataLines = 0;
  for (std::string line; std::getline(plot, line);) dataLines += !line.empty() && line[0] != '#';
  EXPECT_EQ(dataLines, 3u);
}

TEST_F(RunTest, PreviewAugment) {
  std::ostringstream log;
  const Dataset train =
      load_manifest(DataLayout{cfg_->data_dir()}.train(), load_vocabulary(DataLayout{cfg_->data_dir()}.vocab()));
  const std::string id = train[3].id;

  ExperimentConfig off = *cfg_;
  off.train.specAugmentEnabled = false;
  const PreviewFiles files = cmd_preview_augment(off, id, log);
  const FeatureMatrix original = read_features(files.original);
  EXPECT_EQ(original, train[3].features);
  EXPECT_EQ(read_features(files.augmented), original);

  const FeatureMatrix partner = read_features(files.partner);
  const FeatureMatrix mixed = read_features(files.mixed);
  ASSERT_EQ(mixed.rows, std::max(original.rows, partner.rows));
  for (std::size_t r = 0; r < mixed.rows; ++r) {
    for (std::size_t c = 0; c < mixed.cols; ++c) {
      const float a = r < original.rows ? original.at(r, c) : 0.0f;
      const float b = r < partner.rows ? partner.at(r, c) : 0.0f;
      EXPECT_FLOAT_EQ(mixed.at(r, c), 0.5f * a + 0.5f * b);
    }
  }

  const PreviewFiles masked = cmd_preview_augment(*cfg_, id, log);
  EXPECT_NE(read_features(masked.augmented), original);
  EXPECT_THROW(cmd_preview_augment(*cfg_, "no-such-utterance", log), InputError);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MIXREP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST_F(RunTest, CliExitCodes) {
  const fs::path conf = *out_ / "cli.conf";
  {
    std::ofstream f(conf);
    f << kTinyConfig << "output.dir = " << (*out_ / "cli").string() << "\n";
  }
  EXPECT_EQ(run_cli("--config " + conf.string() + " gen-data"), 0);
  EXPECT_TRUE(fs::exists(*out_ / "cli" / "data" / "train.tsv"));

  const fs::path bad = *out_ / "bad.conf";
  std::ofstream(bad) << "model.dimension = 4\n";
  EXPECT_EQ(run_cli("--config " + bad.string() + " gen-data"), 1);
  EXPECT_EQ(run_cli("--no-such-flag"), 1);

  const fs::path junk = *out_ / "junk.ckpt";
  std::ofstream(junk) << "not a checkpoint";
  EXPECT_EQ(run_cli("eval --checkpoint " + junk.string() + " --manifest " +
                    (*out_ / "cli" / "data" / "eval.tsv").string()),
            2);
}

}  // namespace
}  // namespace mixrep
