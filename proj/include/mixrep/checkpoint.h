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

#ifndef MIXREP_CHECKPOINT_H_
#define MIXREP_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mixrep/model.h"

namespace mixrep {

// "MXRC", u32 version, ModelConfig, u32 parameter count, then per parameter
// u32 name length, name bytes, u32 rank, u32 dims, f32 values. Little-endian.
template <typename Real>
std::vector<std::uint8_t> encode_checkpoint(const Model<Real>& model);

template <typename Real>
Model<Real> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

template <typename Real>
void save_checkpoint(const Model<Real>& model, const std::filesystem::path& path);

template <typename Real>
Model<Real> load_checkpoint(const std::filesystem::path& path);

// Reads only the header; used to check compatibility before loading.
ModelConfig read_checkpoint_config(const std::filesystem::path& path);

}  // namespace mixrep

#endif  // MIXREP_CHECKPOINT_H_
