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

#include "mixrep/config.h"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>

#include "mixrep/errors.h"

namespace mixrep {

const char* mode_name(ExperimentMode mode) {
  switch (mode) {
    case ExperimentMode::kBaseline:
      return "baseline";
    case ExperimentMode::kMixRepBasic:
      return "mixrep-basic";
    case ExperimentMode::kMixRepTimeEnhanced:
      return "mixrep-time-enhanced";
  }
  return "?";
}

ExperimentMode parse_mode(const std::string& name) {
  for (auto m : {ExperimentMode::kBaseline, ExperimentMode::kMixRepBasic,
                 ExperimentMode::kMixRepTimeEnhanced}) {
    if (name == mode_name(m)) return m;
  }
  throw ConfigError("unknown mode '" + name +
                    "' (expected baseline, mixrep-basic or mixrep-time-enhanced)");
}

std::filesystem::path ExperimentConfig::data_dir() const {
  return dataDir.empty() ? outputDir / "data" : dataDir;
}

void ExperimentConfig::apply_mode() {
  train.mixupEnabled = mode != ExperimentMode::kBaseline;
  train.specAugment.enabledTime = mode != ExperimentMode::kMixRepBasic;
  train.specAugment.enabledFreq = true;
}

void ExperimentConfig::validate() {
  warnings.clear();
  model.featureDim = synth.featureDim;
  model.vocabSize = synth.vocabSize;
  synth.numUtterances = trainUtterances;
  synth.validate();
  model.validate();
  if (trainUtterances < 1) throw ConfigError("synth.train_utterances must be >= 1");
  apply_mode();
  if (mode == ExperimentMode::kBaseline) {
    if (layersExplicit) warnings.push_back("mode baseline ignores mixup.layers");
  } else if (!(train.mixup.tau > 0.0)) {
    throw ConfigError(std::string("mode ") + mode_name(mode) + " needs mixup.tau > 0");
  }
  try {
    train.mixup.validate(int(model.encoderLayers));
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  train.validate(int(model.encoderLayers));
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& value, std::size_t line) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("line " + std::to_string(line) + ": bad value '" + value + "' for " + key);
  }
  return out;
}

double parse_real(const std::string& key, const std::string& value, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("line " + std::to_string(line) + ": bad value '" + value + "' for " + key);
}

bool parse_bool(const std::string& key, const std::string& value, std::size_t line) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("line " + std::to_string(line) + ": expected true/false for " + key);
}

std::vector<int> parse_layers(const std::string& key, const std::string& value,
                              std::size_t line) {
  std::vector<int> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) {
      throw ConfigError("line " + std::to_string(line) + ": empty entry in " + key);
    }
    out.push_back(parse_number<int>(key, item.substr(b, e - b + 1), line));
  }
  return out;
}

std::string join_layers(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string real_str(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Key {
  const char* name;
  std::function<void(ExperimentConfig&, const std::string&, std::size_t)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define SIZE_KEY(NAME, FIELD)                                                               \
  Key {                                                                                     \
    NAME,                                                                                   \
        [](ExperimentConfig& c, const std::string& v, std::size_t l) {                      \
          c.FIELD = parse_number<std::size_t>(NAME, v, l);                                  \
        },                                                                                  \
        [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }                   \
  }
#define REAL_KEY(NAME, FIELD)                                                               \
  Key {                                                                                     \
    NAME, [](ExperimentConfig& c, const std::string& v, std::size_t l) {                    \
      c.FIELD = parse_real(NAME, v, l);                                                     \
    },                                                                                      \
        [](const ExperimentConfig& c) { return real_str(c.FIELD); }                         \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      Key{"mode",
          [](ExperimentConfig& c, const std::string& v, std::size_t) { c.mode = parse_mode(v); },
          [](const ExperimentConfig& c) { return std::string(mode_name(c.mode)); }},
      Key{"output.dir",
          [](ExperimentConfig& c, const std::string& v, std::size_t) { c.outputDir = v; },
          [](const ExperimentConfig& c) { return c.outputDir.string(); }},
      Key{"data.dir", [](ExperimentConfig& c, const std::string& v, std::size_t) { c.dataDir = v; },
          [](const ExperimentConfig& c) { return c.dataDir.string(); }},
      SIZE_KEY("synth.vocab_size", synth.vocabSize),
      SIZE_KEY("synth.train_utterances", trainUtterances),
      SIZE_KEY("synth.eval_utterances", evalUtterances),
      SIZE_KEY("synth.tokens_min", synth.tokensMin),
      SIZE_KEY("synth.tokens_max", synth.tokensMax),
      SIZE_KEY("synth.frames_per_token_min", synth.framesPerTokenMin),
      SIZE_KEY("synth.frames_per_token_max", synth.framesPerTokenMax),
      SIZE_KEY("synth.feature_dim", synth.featureDim),
      REAL_KEY("synth.noise_std", synth.noiseStd),
      Key{"synth.seed",
          [](ExperimentConfig& c, const std::string& v, std::size_t l) {
            c.synth.seed = parse_number<std::uint64_t>("synth.seed", v, l);
          },
          [](const ExperimentConfig& c) { return std::to_string(c.synth.seed); }},
      SIZE_KEY("model.dim", model.modelDim),
      SIZE_KEY("model.encoder_layers", model.encoderLayers),
      SIZE_KEY("model.decoder_layers", model.decoderLayers),
      SIZE_KEY("model.heads", model.attentionHeads),
      SIZE_KEY("model.ffn_dim", model.ffnDim),
      SIZE_KEY("model.conv_kernel", model.convKernel),
      SIZE_KEY("model.subsample_channels", model.subsampleChannels),
      SIZE_KEY("model.max_target_length", model.maxTargetLength),
      REAL_KEY("model.dropout", model.dropout),
      SIZE_KEY("train.epochs", train.epochs),
      REAL_KEY("train.peak_lr", train.peakLR),
      SIZE_KEY("train.warmup_steps", train.warmupSteps),
      SIZE_KEY("train.accum_steps", train.accumSteps),
      Key{"train.seed",
          [](ExperimentConfig& c, const std::string& v, std::size_t l) {
            c.train.masterSeed = parse_number<std::uint64_t>("train.seed", v, l);
          },
          [](const ExperimentConfig& c) { return std::to_string(c.train.masterSeed); }},
      SIZE_KEY("train.max_elements", train.maxElementsPerBatch),
      SIZE_KEY("train.eval_every", train.evalEvery),
      REAL_KEY("train.alpha_joint", train.loss.alphaJoint),
      REAL_KEY("train.label_smoothing", train.loss.labelSmoothing),
      REAL_KEY("train.grad_clip", train.gradClip),
      REAL_KEY("train.adam_beta1", train.adamBeta1),
      REAL_KEY("train.adam_beta2", train.adamBeta2),
      REAL_KEY("train.adam_eps", train.adamEps),
      REAL_KEY("mixup.alpha", train.mixup.alpha),
      REAL_KEY("mixup.tau", train.mixup.tau),
      Key{"mixup.layers",
          [](ExperimentConfig& c, const std::string& v, std::size_t l) {
            c.train.mixup.layerSet = parse_layers("mixup.layers", v, l);
            c.layersExplicit = true;
          },
          [](const ExperimentConfig& c) { return join_layers(c.train.mixup.layerSet); }},
      Key{"specaug.enabled",
          [](ExperimentConfig& c, const std::string& v, std::size_t l) {
            c.train.specAugmentEnabled = parse_bool("specaug.enabled", v, l);
          },
          [](const ExperimentConfig& c) {
            return std::string(c.train.specAugmentEnabled ? "true" : "false");
          }},
      SIZE_KEY("specaug.time_warp_window", train.specAugment.timeWarpWindow),
      SIZE_KEY("specaug.num_freq_masks", train.specAugment.numFreqMasks),
      SIZE_KEY("specaug.freq_mask_width", train.specAugment.freqMaskWidth),
      SIZE_KEY("specaug.num_time_masks", train.specAugment.numTimeMasks),
      SIZE_KEY("specaug.time_mask_width", train.specAugment.timeMaskWidth),
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value,
                      std::size_t line) {
  for (const auto& k : keys()) {
    if (key == k.name) {
      k.set(cfg, value, line);
      return;
    }
  }
  throw ConfigError((line ? "line " + std::to_string(line) + ": " : std::string()) +
                    "unknown config key '" + key + "'");
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line) + ": expected 'key = value'");
    }
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError("line " + std::to_string(line) + ": expected 'key = value'");
    }
    set_config_value(cfg, key, value, line);
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse_config(in);
}

std::string dump_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  for (const auto& k : keys()) {
    const std::string v = k.get(cfg);
    if (!v.empty()) out << k.name << " = " << v << '\n';
  }
  return out.str();
}

}  // namespace mixrep
