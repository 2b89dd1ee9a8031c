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

#ifndef MIXREP_CONFIG_H_
#define MIXREP_CONFIG_H_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mixrep/dataio.h"
#include "mixrep/model.h"
#include "mixrep/trainer.h"

namespace mixrep {

enum class ExperimentMode { kBaseline, kMixRepBasic, kMixRepTimeEnhanced };

const char* mode_name(ExperimentMode mode);
ExperimentMode parse_mode(const std::string& name);

struct ExperimentConfig {
  ExperimentMode mode = ExperimentMode::kBaseline;
  std::filesystem::path outputDir = "runs/toy";
  // Defaults to <outputDir>/data when empty.
  std::filesystem::path dataDir;
  SynthConfig synth;
  std::size_t trainUtterances = 400;
  std::size_t evalUtterances = 100;
  ModelConfig model;
  TrainConfig train;
  // True once mixup.layers was given explicitly.
  bool layersExplicit = false;
  // Warnings produced while validating (non-fatal inconsistencies).
  std::vector<std::string> warnings;

  std::filesystem::path data_dir() const;

  // Applies the mode to the train config: mixup on/off and time-axis
  // augmentation on/off.
  void apply_mode();
  void validate();
};

// Flat `key = value` lines; `#` starts a comment. Unknown keys are errors.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

// Sets one dotted key; used by the parser and for command-line overrides.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value,
                      std::size_t line = 0);

// Every key with its current value, in the parser's format.
std::string dump_config(const ExperimentConfig& cfg);

}  // namespace mixrep

#endif  // MIXREP_CONFIG_H_
