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

#include "mixrep/dataio.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mixrep/errors.h"

namespace mixrep {
namespace {

constexpr char kFeatureMagic[4] = {'M', 'X', 'R', 'F'};
constexpr std::uint32_t kFeatureVersion = 1;
constexpr std::size_t kFeatureHeaderBytes = 16;

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(in[offset + i]) << (8 * i);
  return v;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::string synthetic_token_name(std::size_t id) {
  if (id <= 26) return std::string(1, char('a' + id - 1));
  return "t" + std::to_string(id);
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw ParseError("duplicate vocabulary entry '" + tokens_[i] + "'", i + 1);
    }
  }
}

Vocabulary Vocabulary::synthetic(std::size_t vocabSize) {
  if (vocabSize < 3) throw ConfigError("vocabulary needs blank, sos/eos and one token");
  std::vector<std::string> names{"<blank>"};
  for (std::size_t id = 1; id + 1 < vocabSize; ++id) names.push_back(synthetic_token_name(id));
  names.emplace_back("<sos/eos>");
  return Vocabulary(std::move(names));
}

int Vocabulary::find(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? -1 : it->second;
}

void SynthConfig::validate() const {
  if (vocabSize < 3) throw ConfigError("synthetic vocabSize must be >= 3");
  if (vocabSize > featureDim) {
    throw ConfigError("synthetic vocabSize " + std::to_string(vocabSize) +
                      " exceeds featureDim " + std::to_string(featureDim) +
                      ": prototype bands would be empty");
  }
  if (tokensMin > tokensMax) throw ConfigError("tokensPerUtterance min exceeds max");
  if (framesPerTokenMin > framesPerTokenMax) throw ConfigError("framesPerToken min exceeds max");
  if (framesPerTokenMin < 1) throw ConfigError("framesPerToken min must be >= 1");
  if (!(noiseStd >= 0.0)) throw ConfigError("noiseStd must be >= 0");
}

std::vector<std::vector<float>> token_prototypes(std::size_t vocabSize, std::size_t featureDim) {
  const std::size_t width = (featureDim + vocabSize - 1) / vocabSize;
  std::vector<std::vector<float>> protos(vocabSize, std::vector<float>(featureDim, 0.0f));
  for (std::size_t v = 0; v < vocabSize; ++v) {
    const std::size_t start = v * featureDim / vocabSize;
    const std::size_t end = std::min(start + width, featureDim);
    const float amp = static_cast<float>(1.0 / std::sqrt(double(end - start)));
    for (std::size_t f = 0; f < featureDim; ++f) {
      const float ramp = featureDim > 1 ? 0.05f * float(f) / float(featureDim - 1) : 0.0f;
      protos[v][f] = (f >= start && f < end ? amp : 0.0f) + ramp;
    }
  }
  return protos;
}

FeatureMatrix render_utterance(const std::vector<int>& tokens, const SynthConfig& cfg,
                               RngStream& rng) {
  const auto protos = token_prototypes(cfg.vocabSize, cfg.featureDim);
  std::vector<std::size_t> durations;
  durations.reserve(tokens.size());
  std::size_t total = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto d = std::size_t(rng.uniform_int(std::int64_t(cfg.framesPerTokenMin),
                                               std::int64_t(cfg.framesPerTokenMax)));
    durations.push_back(d);
    total += d;
  }
  FeatureMatrix m(total, cfg.featureDim);
  std::size_t row = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& p = protos.at(static_cast<std::size_t>(tokens[i]));
    for (std::size_t k = 0; k < durations[i]; ++k, ++row) {
      std::copy(p.begin(), p.end(), m.values.begin() + row * cfg.featureDim);
    }
  }
  if (cfg.noiseStd > 0.0) {
    for (float& v : m.values) v += static_cast<float>(rng.normal(0.0, cfg.noiseStd));
  }
  return m;
}

Dataset gen_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  if (cfg.tokensMin < 1) throw ConfigError("tokensPerUtterance min must be >= 1 (T >= 1)");
  RngStream master(cfg.seed);
  Dataset data;
  data.reserve(cfg.numUtterances);
  for (std::size_t i = 0; i < cfg.numUtterances; ++i) {
    RngStream rng = master.derive(i);
    const auto len = std::size_t(rng.uniform_int(std::int64_t(cfg.tokensMin),
                                                 std::int64_t(cfg.tokensMax)));
    std::vector<int> tokens(len);
    for (int& t : tokens) t = int(rng.uniform_int(1, std::int64_t(cfg.vocabSize) - 2));
    char id[32];
    std::snprintf(id, sizeof(id), "utt%05zu", i);
    data.push_back(Utterance{id, render_utterance(tokens, cfg, rng), std::move(tokens)});
  }
  return data;
}

std::vector<std::uint8_t> encode_features(const FeatureMatrix& m) {
  if (m.rows > UINT32_MAX || m.cols > UINT32_MAX) {
    throw FormatError("feature matrix extents exceed u32", 8);
  }
  std::vector<std::uint8_t> out(kFeatureMagic, kFeatureMagic + 4);
  put_u32(out, kFeatureVersion);
  put_u32(out, std::uint32_t(m.rows));
  put_u32(out, std::uint32_t(m.cols));
  const std::size_t payload = m.values.size() * sizeof(float);
  out.resize(kFeatureHeaderBytes + payload);
  std::memcpy(out.data() + kFeatureHeaderBytes, m.values.data(), payload);
  return out;
}

FeatureMatrix decode_features(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kFeatureMagic, 4) != 0) {
    throw FormatError("bad feature file magic", 0);
  }
  if (bytes.size() < kFeatureHeaderBytes) {
    throw FormatError("truncated feature header", bytes.size());
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kFeatureVersion) {
    throw FormatError("unsupported feature file version " + std::to_string(version), 4);
  }
  const std::uint64_t rows = get_u32(bytes, 8);
  const std::uint64_t cols = get_u32(bytes, 12);
  const std::uint64_t count = rows * cols;
  if (count > (UINT64_MAX / sizeof(float))) {
    throw FormatError("feature extents overflow", 8);
  }
  const std::uint64_t need = count * sizeof(float);
  const std::uint64_t have = bytes.size() - kFeatureHeaderBytes;
  if (need > have) {
    throw FormatError("truncated feature payload: header claims " + std::to_string(need) +
                          " bytes, " + std::to_string(have) + " remain",
                      bytes.size());
  }
  if (need < have) {
    throw FormatError("trailing bytes after feature payload", kFeatureHeaderBytes + need);
  }
  FeatureMatrix m(rows, cols);
  std::memcpy(m.values.data(), bytes.data() + kFeatureHeaderBytes, need);
  return m;
}

void write_features(const FeatureMatrix& m, const std::filesystem::path& path) {
  write_file(path, encode_features(m));
}

FeatureMatrix read_features(const std::filesystem::path& path) {
  return decode_features(read_file(path));
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw ParseError("empty vocabulary entry", tokens.size() + 1);
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

void write_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& t : vocab.tokens()) out << t << '\n';
}

Dataset load_manifest(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const std::filesystem::path base = path.parent_path();
  Dataset data;
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 3) {
      throw ParseError("expected 3 tab-separated fields, found " + std::to_string(fields.size()),
                       lineNo);
    }
    if (fields[0].empty() || fields[1].empty()) {
      throw ParseError("empty id or feature path", lineNo);
    }
    Utterance utt;
    utt.id = fields[0];
    std::istringstream toks(fields[2]);
    std::string tok;
    while (toks >> tok) {
      const int id = vocab.find(tok);
      if (id < 0) throw VocabularyError("unknown token '" + tok + "'", lineNo);
      utt.tokens.push_back(id);
    }
    try {
      utt.features = read_features(base / fields[1]);
    } catch (const FormatError& e) {
      throw ParseError(std::string("feature file ") + fields[1] + ": " + e.what(), lineNo);
    }
    data.push_back(std::move(utt));
  }
  return data;
}

void write_manifest(const Dataset& data, const Vocabulary& vocab,
                    const std::filesystem::path& path, const std::string& featureDir) {
  const std::filesystem::path base = path.parent_path();
  std::filesystem::create_directories(base / featureDir);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& utt : data) {
    const std::string rel = featureDir + "/" + utt.id + ".mxf";
    write_features(utt.features, base / rel);
    out << utt.id << '\t' << rel << '\t';
    for (std::size_t i = 0; i < utt.tokens.size(); ++i) {
      if (i) out << ' ';
      out << vocab.token(utt.tokens[i]);
    }
    out << '\n';
  }
}

Batch collate(const Dataset& data, const std::vector<std::size_t>& members) {
  Batch b;
  b.batchSize = members.size();
  b.members = members;
  for (std::size_t m : members) {
    b.maxFrames = std::max(b.maxFrames, data[m].features.rows);
    if (b.featureDim && b.featureDim != data[m].features.cols) {
      throw DimensionError("batch members disagree on feature dim");
    }
    b.featureDim = data[m].features.cols;
  }
  b.features.assign(b.batchSize * b.maxFrames * b.featureDim, 0.0f);
  for (std::size_t i = 0; i < members.size(); ++i) {
    const auto& utt = data[members[i]];
    std::copy(utt.features.values.begin(), utt.features.values.end(),
              b.features.begin() + i * b.maxFrames * b.featureDim);
    b.featLengths.push_back(utt.features.rows);
    b.labels.push_back(utt.tokens);
  }
  return b;
}

std::vector<std::vector<std::size_t>> plan_batches(const Dataset& data, std::size_t maxElements,
                                                   std::uint64_t shuffleSeed) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return data[a].features.rows < data[b].features.rows;
  });
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> current;
  std::size_t currentMax = 0;
  for (std::size_t idx : order) {
    const auto& f = data[idx].features;
    if (f.rows * f.cols > maxElements) {
      throw ConfigError("utterance " + data[idx].id + " (" + std::to_string(f.rows * f.cols) +
                        " elements) exceeds batch budget " + std::to_string(maxElements));
    }
    const std::size_t newMax = std::max(currentMax, f.rows);
    if (!current.empty() && (current.size() + 1) * newMax * f.cols > maxElements) {
      batches.push_back(std::move(current));
      current.clear();
      currentMax = 0;
    }
    current.push_back(idx);
    currentMax = std::max(currentMax, f.rows);
  }
  if (!current.empty()) batches.push_back(std::move(current));
  RngStream rng(shuffleSeed);
  std::shuffle(batches.begin(), batches.end(), rng.engine());
  return batches;
}

std::vector<Batch> make_batches(const Dataset& data, std::size_t maxElements,
                                std::uint64_t shuffleSeed) {
  std::vector<Batch> out;
  for (const auto& members : plan_batches(data, maxElements, shuffleSeed)) {
    out.push_back(collate(data, members));
  }
  return out;
}

}  // namespace mixrep
