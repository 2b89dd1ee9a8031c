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

#ifndef MIXREP_RNG_H_
#define MIXREP_RNG_H_

#include <cstdint>
#include <random>
#include <string_view>

namespace mixrep {

// Seeded random stream. Child streams are derived from the seed, not from
// the current engine state, so drawing from a parent never shifts a child.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  RngStream derive(std::uint64_t id) const;
  RngStream derive(std::string_view name) const;

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  // Uniform integer in [lo, hi], both inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal(double mean = 0.0, double stddev = 1.0);
  double gamma(double shape);
  bool bernoulli(double p) { return uniform() < p; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// One independent stream per consumer so toggling one kind of randomness
// (augmentation, mixup) leaves the others untouched.
struct RngStreams {
  RngStream init;
  RngStream dropout;
  RngStream augment;
  RngStream mixup;
  RngStream data;

  static RngStreams from_master(std::uint64_t masterSeed);
};

}  // namespace mixrep

#endif  // MIXREP_RNG_H_
