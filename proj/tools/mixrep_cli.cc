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

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mixrep/config.h"
#include "mixrep/errors.h"
#include "mixrep/harness.h"

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool deterministic = false;
};

mixrep::ExperimentConfig resolve(const GlobalOptions& g) {
  mixrep::ExperimentConfig cfg =
      g.config.empty() ? mixrep::ExperimentConfig{} : mixrep::load_config(g.config);
  if (g.seed) cfg.train.masterSeed = *g.seed;
  if (!g.out.empty()) cfg.outputDir = g.out;
  cfg.validate();
  for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << '\n';
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MixRep lab: hidden-representation mixup for sequence recognition"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "Experiment config (key = value lines)");
  app.add_option("--seed", g.seed, "Master training seed (overrides train.seed)");
  app.add_option("--out", g.out, "Output directory (overrides output.dir)");
  app.add_flag("--deterministic", g.deterministic, "64-bit arithmetic for bitwise reruns");

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset");
  auto* trainCmd = app.add_subcommand("train", "Train one model");
  auto* evalCmd = app.add_subcommand("eval", "Score a checkpoint on a manifest");
  std::string checkpoint, manifest, report;
  std::size_t maxElements = 8192;
  evalCmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  evalCmd->add_option("--manifest", manifest, "Manifest (vocab.txt is read beside it)")
      ->required();
  evalCmd->add_option("--report", report, "Write the report to this file");
  evalCmd->add_option("--max-elements", maxElements, "Batch budget B*T*F");
  auto* sweep = app.add_subcommand("sweep-layers", "Per-layer mixup sweep");
  auto* preview = app.add_subcommand("preview-augment", "Write augmentation previews");
  std::string utterance;
  preview->add_option("--utterance", utterance, "Utterance id")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      mixrep::cmd_gen_data(resolve(g), std::cout);
    } else if (trainCmd->parsed()) {
      const auto cfg = resolve(g);
      mixrep::cmd_train(cfg, cfg.outputDir, g.deterministic, std::cout);
    } else if (evalCmd->parsed()) {
      mixrep::cmd_eval(checkpoint, manifest, maxElements, g.deterministic, report, std::cout);
    } else if (sweep->parsed()) {
      mixrep::cmd_sweep_layers(resolve(g), g.deterministic, std::cout);
    } else if (preview->parsed()) {
      mixrep::cmd_preview_augment(resolve(g), utterance, std::cout);
    }
  } catch (const mixrep::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
