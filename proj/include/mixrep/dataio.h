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

#ifndef MIXREP_DATAIO_H_
#define MIXREP_DATAIO_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "mixrep/rng.h"

namespace mixrep {

// Row-major frames x feature-dim matrix.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0f) {}

  float& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  float at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  bool operator==(const FeatureMatrix&) const = default;
};

struct Utterance {
  std::string id;
  FeatureMatrix features;
  std::vector<int> tokens;
};

using Dataset = std::vector<Utterance>;

// Token id 0 is the CTC blank and the last id is the shared sos/eos symbol.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  // "<blank>", then one printable name per emitting token, then "<sos/eos>".
  static Vocabulary synthetic(std::size_t vocabSize);

  std::size_t size() const { return tokens_.size(); }
  int blank_id() const { return 0; }
  int sos_eos_id() const { return static_cast<int>(tokens_.size()) - 1; }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  // -1 when absent.
  int find(const std::string& token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct SynthConfig {
  std::size_t vocabSize = 12;
  std::size_t numUtterances = 500;
  std::size_t tokensMin = 3;
  std::size_t tokensMax = 8;
  std::size_t framesPerTokenMin = 8;
  std::size_t framesPerTokenMax = 12;
  std::size_t featureDim = 16;
  double noiseStd = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
};

// Prototype vector per token id: unit energy on a contiguous band of
// ceil(F / V) dims starting at floor(v * F / V), plus a small shared ramp.
std::vector<std::vector<float>> token_prototypes(std::size_t vocabSize,
                                                 std::size_t featureDim);

// Emits each token for a uniform duration and adds Gaussian noise.
FeatureMatrix render_utterance(const std::vector<int>& tokens, const SynthConfig& cfg,
                               RngStream& rng);

Dataset gen_synthetic(const SynthConfig& cfg);

// Binary feature file: "MXRF", u32 version=1, u32 T, u32 F, T*F f32, all
// little-endian.
void write_features(const FeatureMatrix& m, const std::filesystem::path& path);
FeatureMatrix read_features(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_features(const FeatureMatrix& m);
FeatureMatrix decode_features(const std::vector<std::uint8_t>& bytes);

Vocabulary load_vocabulary(const std::filesystem::path& path);
void write_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path);

// Manifest lines: <id>\t<feature path relative to the manifest>\t<tokens>.
Dataset load_manifest(const std::filesystem::path& path, const Vocabulary& vocab);
// Writes feature files under featureDir (relative to the manifest directory).
void write_manifest(const Dataset& data, const Vocabulary& vocab,
                    const std::filesystem::path& path, const std::string& featureDir);

struct Batch {
  std::size_t batchSize = 0;
  std::size_t maxFrames = 0;
  std::size_t featureDim = 0;
  // batchSize x maxFrames x featureDim, zero-padded.
  std::vector<float> features;
  std::vector<std::size_t> featLengths;
  std::vector<std::vector<int>> labels;
  // Positions of the members in the source dataset.
  std::vector<std::size_t> members;
};

Batch collate(const Dataset& data, const std::vector<std::size_t>& members);

// Sorts by length, fills greedily under B * T_max * F <= maxElements, then
// shuffles batch order.
std::vector<std::vector<std::size_t>> plan_batches(const Dataset& data,
                                                   std::size_t maxElements,
                                                   std::uint64_t shuffleSeed);
std::vector<Batch> make_batches(const Dataset& data, std::size_t maxElements,
                                std::uint64_t shuffleSeed);

}  // namespace mixrep

#endif  // MIXREP_DATAIO_H_
