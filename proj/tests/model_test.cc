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
#include <cstring>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "mixrep/augment.h"
#include "mixrep/checkpoint.h"
#include "mixrep/errors.h"
#include "mixrep/model.h"
#include "test_util.h"

namespace mixrep {
namespace {

using testing::check_gradients;
using testing::probe;
using testing::random_tensor;

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.featureDim = 6;
  cfg.modelDim = 8;
  cfg.encoderLayers = 2;
  cfg.decoderLayers = 1;
  cfg.attentionHeads = 2;
  cfg.ffnDim = 12;
  cfg.convKernel = 3;
  cfg.subsampleChannels = 3;
  cfg.vocabSize = 6;
  cfg.maxTargetLength = 8;
  cfg.dropout = 0.1;
  return cfg;
}

Batch random_batch(const std::vector<std::size_t>& lengths, std::size_t featureDim,
                   std::uint64_t seed) {
  RngStream rng(seed);
  Batch b;
  b.batchSize = lengths.size();
  b.featureDim = featureDim;
  for (std::size_t len : lengths) b.maxFrames = std::max(b.maxFrames, len);
  b.features.assign(b.batchSize * b.maxFrames * featureDim, 0.0f);
  for (std::size_t i = 0; i < b.batchSize; ++i) {
    for (std::size_t t = 0; t < lengths[i]; ++t) {
      for (std::size_t f = 0; f < featureDim; ++f) {
        b.features[(i * b.maxFrames + t) * featureDim + f] = float(rng.normal());
      }
    }
    b.labels.push_back({1, 2});
    b.members.push_back(i);
  }
  b.featLengths = lengths;
  return b;
}

template <typename Real>
std::vector<Real> values_of(const Tensor<Real>& t) {
  return {t.data().begin(), t.data().end()};
}

TEST(SubsampleTest, LengthFormula) {
  EXPECT_EQ(subsampled_length(16), 3u);
  EXPECT_EQ(subsampled_length(7), 1u);
  EXPECT_EQ(subsampled_length(6), 0u);
  EXPECT_EQ(subsampled_length(0), 0u);
  for (std::size_t t = 7; t < 200; ++t) {
    EXPECT_EQ(subsampled_length(t), ((t - 1) / 2 - 1) / 2) << t;
  }
}

TEST(SubsampleTest, OutputShapeMatchesLengthFormula) {
  RngStream init(1);
  Model<double> model(small_config(), init);
  ForwardContext ctx;
  for (std::size_t T : {7u, 8u, 16u, 23u}) {
    const auto x = Tensor<double>::zeros({2, T, 6});
    const std::vector<std::size_t> lengths{T, T};
    const auto y = model.subsample(x, lengths, ctx);
    EXPECT_EQ(y.shape(), (Shape{2, subsampled_length(T), 8})) << T;
  }
}

TEST(SubsampleTest, NarrowInputGradientCheck) {
  ModelConfig cfg = small_config();
  cfg.featureDim = 4;
  RngStream init(2);
  Model<double> model(cfg, init);
  RngStream rng(3);
  auto x = random_tensor({2, 8, 4}, rng);
  const std::vector<std::size_t> lengths{8, 8};
  ForwardContext ctx;
  const auto y = model.subsample(x, lengths, ctx);
  double energy = 0.0;
  for (double v : y.data()) energy += v * v;
  EXPECT_TRUE(std::isfinite(energy));
  EXPECT_GT(energy, 0.0);

  std::vector<Tensor<double>> leaves{x};
  for (auto& p : model.parameters()) {
    if (p.name.rfind("subsample.", 0) == 0) leaves.push_back(p.tensor);
  }
  ASSERT_EQ(leaves.size(), 7u);
  check_gradients([&] { return probe(model.subsample(x, lengths, ctx)); }, leaves);
}

TEST(SubsampleTest, RejectsShortOrMismatchedInput) {
  RngStream init(1);
  Model<double> model(small_config(), init);
  ForwardContext ctx;
  const std::vector<std::size_t> six{6};
  EXPECT_THROW(model.subsample(Tensor<double>::zeros({1, 6, 6}), six, ctx), InputError);
  const std::vector<std::size_t> mixed{10, 5};
  EXPECT_THROW(model.subsample(Tensor<double>::zeros({2, 10, 6}), mixed, ctx), InputError);
  const std::vector<std::size_t> ten{10};
  EXPECT_THROW(model.subsample(Tensor<double>::zeros({1, 10, 5}), ten, ctx), DimensionError);
}

TEST(ModelConfigTest, RejectsInvalidConfigs) {
  ModelConfig cfg = small_config();
  cfg.attentionHeads = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.convKernel = 4;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.encoderLayers = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.dropout = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_NO_THROW(small_config().validate());
}

TEST(ModelTest, ParameterCountRegression) {
  ModelConfig cfg;
  RngStream init(1);
  Model<float> model(cfg, init);
  EXPECT_EQ(model.parameter_count(), 324728u);
  Model<float> zeros(cfg);
  EXPECT_EQ(zeros.parameter_count(), 324728u);
  Model<double> wide(cfg);
  EXPECT_EQ(wide.parameter_count(), 324728u);
}

TEST(ModelTest, ParameterNamesAreUnique) {
  Model<float> model(small_config());
  std::set<std::string> names;
  for (const auto& p : model.parameters()) EXPECT_TRUE(names.insert(p.name).second) << p.name;
}

TEST(ModelTest, InitIsDeterministic) {
  RngStream a(9), b(9);
  Model<float> m1(small_config(), a), m2(small_config(), b);
  for (std::size_t i = 0; i < m1.parameters().size(); ++i) {
    EXPECT_EQ(values_of(m1.parameters()[i].tensor), values_of(m2.parameters()[i].tensor));
  }
}

class EncodeTest : public ::testing::Test {
 protected:
  EncodeTest() : init_(4), model_(small_config(), init_) {}

  ForwardTrace<double> run(const Batch& batch, const MixPlan& plan, bool training,
                           bool augment = false, bool record = false) {
    RngStream dropout(11), aug(12);
    ForwardContext ctx;
    ctx.training = training;
    ctx.dropout = &dropout;
    ctx.augment = augment ? &aug : nullptr;
    ctx.recordLayers = record;
    SpecAugmentConfig spec;
    spec.freqMaskWidth = 2;
    spec.timeMaskWidth = 3;
    spec.timeWarpWindow = 2;
    return model_.encode(batch, plan, spec, ctx);
  }

  RngStream init_;
  Model<double> model_;
};

TEST_F(EncodeTest, LambdaOnePlanMatchesPlainPassAtEveryLayer) {
  const Batch batch = random_batch({20, 17, 13}, 6, 5);
  for (bool training : {false, true}) {
    const auto plain = run(batch, MixPlan{}, training, training);
    for (int k = 0; k <= 2; ++k) {
      MixPlan plan;
      plan.apply = true;
      plan.lambda = 1.0;
      plan.layerIndex = k;
      plan.permutation = {2, 0, 1};
      const auto mixed = run(batch, plan, training, training);
      EXPECT_EQ(values_of(mixed.encoderOutput), values_of(plain.encoderOutput))
          << "k=" << k << " training=" << training;
      EXPECT_EQ(mixed.subsampledLengths, plain.subsampledLengths);
    }
  }
}

TEST_F(EncodeTest, NoMixPlanIsRepeatable) {
  const Batch batch = random_batch({20, 17}, 6, 5);
  const auto a = run(batch, MixPlan{}, true, true);
  const auto b = run(batch, MixPlan{}, true, true);
  EXPECT_EQ(values_of(a.encoderOutput), values_of(b.encoderOutput));
}

TEST_F(EncodeTest, LayersBeforeMixPointMatchPlainPass) {
  const Batch batch = random_batch({20, 17, 13}, 6, 6);
  const auto plain = run(batch, MixPlan{}, false, false, true);
  MixPlan plan;
  plan.apply = true;
  plan.lambda = 0.5;
  plan.layerIndex = 2;
  plan.permutation = {1, 2, 0};
  const auto mixed = run(batch, plan, false, false, true);
  ASSERT_EQ(mixed.layerOutputs.size(), 3u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(values_of(mixed.layerOutputs[i]), values_of(plain.layerOutputs[i])) << i;
  }
  EXPECT_NE(values_of(mixed.layerOutputs[2]), values_of(plain.layerOutputs[2]));
  const auto expected = mix_rows(plain.layerOutputs[2], plan.permutation, 0.5);
  EXPECT_EQ(values_of(mixed.layerOutputs[2]), values_of(expected));
}

TEST_F(EncodeTest, InputMixPrecedesMasking) {
  const Batch batch = random_batch({24, 24}, 6, 7);
  MixPlan plan;
  plan.apply = true;
  plan.lambda = 0.5;
  plan.layerIndex = 0;
  plan.permutation = {1, 0};
  const auto trace = run(batch, plan, true, true, true);

  std::vector<double> raw(batch.features.begin(), batch.features.end());
  const auto x = Tensor<double>::from({2, 24, 6}, raw);
  const auto mixed = mix_rows(x, plan.permutation, 0.5);
  EXPECT_EQ(values_of(trace.inputBeforeAugment), values_of(mixed));

  // Re-run the same augment stream over the mixed features by hand.
  std::vector<double> expected = values_of(mixed);
  RngStream aug(12);
  SpecAugmentConfig spec;
  spec.freqMaskWidth = 2;
  spec.timeMaskWidth = 3;
  spec.timeWarpWindow = 2;
  std::size_t zeroedCells = 0;
  for (std::size_t b = 0; b < 2; ++b) {
    auto stats = spec_augment_inplace(std::span<double>(expected).subspan(b * 24 * 6, 24 * 6), 6,
                                      24, spec, aug);
    zeroedCells += stats.timeIntervals.size() + stats.freqIntervals.size();
  }
  EXPECT_EQ(values_of(trace.inputAfterAugment), expected);
  EXPECT_GT(zeroedCells, 0u);
  EXPECT_GT(trace.augmentStats.freqMasks, 0u);
}

TEST_F(EncodeTest, AugmentationOnlyInTraining) {
  const Batch batch = random_batch({24, 20}, 6, 8);
  const auto eval = run(batch, MixPlan{}, false, true, true);
  EXPECT_EQ(values_of(eval.inputAfterAugment), values_of(eval.inputBeforeAugment));
  EXPECT_EQ(eval.augmentStats.timeMasks + eval.augmentStats.freqMasks, 0u);
}

TEST_F(EncodeTest, PaddedFramesDoNotLeak) {
  Batch batch = random_batch({20, 13}, 6, 9);
  const auto before = run(batch, MixPlan{}, false);
  for (std::size_t t = 13; t < 20; ++t) {
    for (std::size_t f = 0; f < 6; ++f) batch.features[(20 + t) * 6 + f] = 50.0f + float(t + f);
  }
  const auto after = run(batch, MixPlan{}, false);
  const std::size_t T2 = before.encoderOutput.dim(1), d = 8;
  const std::size_t valid = before.subsampledLengths[1];
  ASSERT_EQ(valid, subsampled_length(13));
  for (std::size_t t = 0; t < valid; ++t) {
    for (std::size_t j = 0; j < d; ++j) {
      const std::size_t idx = (T2 + t) * d + j;
      EXPECT_NEAR(after.encoderOutput.data()[idx], before.encoderOutput.data()[idx], 1e-5);
    }
  }
}

TEST_F(EncodeTest, BatchIndependence) {
  const Batch pair = random_batch({16, 16}, 6, 10);
  Batch single = pair;
  single.batchSize = 1;
  single.features.resize(16 * 6);
  single.featLengths = {16};
  single.labels.resize(1);
  single.members.resize(1);
  const auto a = run(pair, MixPlan{}, false);
  const auto b = run(single, MixPlan{}, false);
  for (std::size_t i = 0; i < b.encoderOutput.numel(); ++i) {
    EXPECT_NEAR(a.encoderOutput.data()[i], b.encoderOutput.data()[i], 1e-5);
  }
}

TEST_F(EncodeTest, RejectsInvalidPlans) {
  const Batch batch = random_batch({20, 17}, 6, 5);
  MixPlan plan;
  plan.apply = true;
  plan.lambda = 0.5;
  plan.layerIndex = 3;
  plan.permutation = {1, 0};
  EXPECT_THROW(run(batch, plan, false), PlanError);
  plan.layerIndex = 1;
  plan.permutation = {0, 0};
  EXPECT_THROW(run(batch, plan, false), PlanError);
  plan.permutation = {1, 0};
  plan.lambda = 1.5;
  EXPECT_THROW(run(batch, plan, false), PlanError);
}

TEST_F(EncodeTest, MixedLengthsFollowWeights) {
  const Batch batch = random_batch({24, 12}, 6, 5);
  MixPlan plan;
  plan.apply = true;
  plan.layerIndex = 0;
  plan.permutation = {1, 0};
  plan.lambda = 0.3;
  const auto trace = run(batch, plan, false);
  EXPECT_EQ(trace.subsampledLengths,
            (std::vector<std::size_t>{subsampled_length(24), subsampled_length(24)}));
  plan.lambda = 0.0;
  const auto swapped = run(batch, plan, false);
  EXPECT_EQ(swapped.subsampledLengths,
            (std::vector<std::size_t>{subsampled_length(12), subsampled_length(24)}));
}

class DecoderTest : public EncodeTest {
 protected:
  Tensor<double> memory() {
    RngStream rng(21);
    return random_tensor({2, 5, 8}, rng, false);
  }
  const std::vector<std::size_t> lengths_{5, 3};
};

TEST_F(DecoderTest, IsCausal) {
  ForwardContext ctx;
  const auto mem = memory();
  const std::vector<std::vector<int>> a{{5, 1, 2, 3, 4}, {5, 2, 2, 1}};
  const std::vector<std::vector<int>> b{{5, 1, 4, 4, 1}, {5, 2, 3, 3}};
  const auto la = model_.decode(mem, lengths_, a, ctx);
  const auto lb = model_.decode(mem, lengths_, b, ctx);
  const std::size_t L = 5, V = 6;
  for (std::size_t row = 0; row < 2; ++row) {
    for (std::size_t t = 0; t < 2; ++t) {
      for (std::size_t v = 0; v < V; ++v) {
        const std::size_t idx = (row * L + t) * V + v;
        EXPECT_EQ(la.data()[idx], lb.data()[idx]) << row << " " << t;
      }
    }
  }
  EXPECT_NE(la.data()[2 * V], lb.data()[2 * V]);
}

TEST_F(DecoderTest, BatchIndependence) {
  ForwardContext ctx;
  const auto mem = memory();
  const std::vector<std::vector<int>> prefixes{{5, 1, 3}, {5, 1, 3}};
  std::vector<double> row0(mem.data().begin(), mem.data().begin() + 40);
  std::vector<double> dup = row0;
  dup.insert(dup.end(), row0.begin(), row0.end());
  const auto pairMem = Tensor<double>::from({2, 5, 8}, dup);
  const auto singleMem = Tensor<double>::from({1, 5, 8}, row0);
  const std::vector<std::size_t> pairLen{5, 5}, singleLen{5};
  const auto pair = model_.decode(pairMem, pairLen, prefixes, ctx);
  const auto single = model_.decode(singleMem, singleLen, {prefixes[0]}, ctx);
  for (std::size_t i = 0; i < single.numel(); ++i) {
    EXPECT_NEAR(pair.data()[i], single.data()[i], 1e-5);
    EXPECT_NEAR(pair.data()[single.numel() + i], single.data()[i], 1e-5);
  }
}

TEST_F(DecoderTest, MemoryPaddingIsIgnored) {
  ForwardContext ctx;
  auto mem = memory();
  const std::vector<std::vector<int>> prefixes{{5, 1}, {5, 2}};
  const auto before = model_.decode(mem, lengths_, prefixes, ctx);
  auto changed = values_of(mem);
  for (std::size_t t = 3; t < 5; ++t) {
    for (std::size_t j = 0; j < 8; ++j) changed[(5 + t) * 8 + j] = 7.0;
  }
  const auto after =
      model_.decode(Tensor<double>::from({2, 5, 8}, changed), lengths_, prefixes, ctx);
  for (std::size_t i = 0; i < before.numel(); ++i) {
    EXPECT_NEAR(before.data()[i], after.data()[i], 1e-9);
  }
}

TEST_F(DecoderTest, GradientCheckThroughDecoderLayer) {
  ForwardContext ctx;
  RngStream rng(22);
  auto mem = random_tensor({2, 5, 8}, rng);
  const std::vector<std::vector<int>> prefixes{{5, 1, 3}, {5, 2}};
  std::vector<Tensor<double>> leaves{mem};
  for (auto& p : model_.parameters()) {
    if (p.name.rfind("decoder.", 0) == 0) leaves.push_back(p.tensor);
  }
  check_gradients([&] { return probe(model_.decode(mem, lengths_, prefixes, ctx)); }, leaves,
                  1e-3, 1e-8, 1e-5, 8);
}

TEST_F(DecoderTest, RejectsBadPrefixes) {
  ForwardContext ctx;
  const auto mem = memory();
  EXPECT_THROW(model_.decode(mem, lengths_, {{1, 2}, {5}}, ctx), InputError);
  EXPECT_THROW(model_.decode(mem, lengths_, {{5}, {}}, ctx), InputError);
  const std::vector<int> tooLong(9, 5);
  EXPECT_THROW(model_.decode(mem, lengths_, {tooLong, {5}}, ctx), InputError);
  const std::vector<int> longest(8, 5);
  EXPECT_NO_THROW(model_.decode(mem, lengths_, {longest, {5}}, ctx));
  EXPECT_THROW(model_.decode(mem, lengths_, {{5}}, ctx), DimensionError);
}

TEST(CtcCollapseTest, Examples) {
  const std::vector<int> frames{0, 1, 1, 0, 2};
  EXPECT_EQ(ctc_collapse(frames), (std::vector<int>{1, 2}));
  const std::vector<int> blanks{0, 0, 0};
  EXPECT_TRUE(ctc_collapse(blanks).empty());
  const std::vector<int> repeat{1, 0, 1, 1, 2, 2};
  EXPECT_EQ(ctc_collapse(repeat), (std::vector<int>{1, 1, 2}));
  EXPECT_TRUE(ctc_collapse(std::vector<int>{}).empty());
}

TEST_F(DecoderTest, GreedyDecodeRespectsBounds) {
  const auto mem = memory();
  const auto ctc = model_.greedy_decode(mem, lengths_, DecodeMode::kCtc);
  ASSERT_EQ(ctc.size(), 2u);
  for (std::size_t b = 0; b < 2; ++b) {
    EXPECT_LE(ctc[b].size(), lengths_[b]);
    for (int tok : ctc[b]) EXPECT_NE(tok, 0);
  }
  const auto att = model_.greedy_decode(mem, lengths_, DecodeMode::kAttention);
  ASSERT_EQ(att.size(), 2u);
  for (std::size_t b = 0; b < 2; ++b) {
    EXPECT_LE(att[b].size(), std::min<std::size_t>(2 * lengths_[b], 7));
    for (int tok : att[b]) EXPECT_NE(tok, 5);
  }
}

TEST(CheckpointTest, RoundTripIsBitExact) {
  RngStream init(31);
  Model<float> model(small_config(), init);
  const auto bytes = encode_checkpoint(model);
  const Model<float> loaded = decode_checkpoint<float>(bytes);
  EXPECT_EQ(loaded.config(), model.config());
  ASSERT_EQ(loaded.parameters().size(), model.parameters().size());
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    EXPECT_EQ(loaded.parameters()[i].name, model.parameters()[i].name);
    EXPECT_EQ(loaded.parameters()[i].tensor.shape(), model.parameters()[i].tensor.shape());
    const auto a = model.parameters()[i].tensor.data();
    const auto b = loaded.parameters()[i].tensor.data();
    EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)), 0);
  }
  EXPECT_EQ(encode_checkpoint(loaded), bytes);
}

TEST(CheckpointTest, FileRoundTrip) {
  RngStream init(32);
  Model<float> model(small_config(), init);
  const auto path = std::filesystem::temp_directory_path() / "mixrep_model_test.ckpt";
  save_checkpoint(model, path);
  EXPECT_EQ(read_checkpoint_config(path), model.config());
  const auto loaded = load_checkpoint<float>(path);
  EXPECT_EQ(encode_checkpoint(loaded), encode_checkpoint(model));
  std::filesystem::remove(path);
}

TEST(CheckpointTest, RejectsCorruption) {
  RngStream init(33);
  Model<float> model(small_config(), init);
  const auto bytes = encode_checkpoint(model);

  auto badMagic = bytes;
  badMagic[0] = 'X';
  try {
    decode_checkpoint<float>(badMagic);
    ADD_FAILURE() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos) << e.what();
  }

  auto badVersion = bytes;
  badVersion[4] = 9;
  EXPECT_THROW(decode_checkpoint<float>(badVersion), FormatError);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(decode_checkpoint<float>(truncated), FormatError);

  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_checkpoint<float>(trailing), FormatError);

  EXPECT_THROW(decode_checkpoint<float>({}), FormatError);
  EXPECT_THROW(load_checkpoint<float>("/nonexistent/mixrep.ckpt"), IoError);
}

}  // namespace
}  // namespace mixrep
