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

#ifndef MIXREP_TESTS_CTC_ORACLE_H_
#define MIXREP_TESTS_CTC_ORACLE_H_

#include <cmath>
#include <cstddef>
#include <vector>

namespace mixrep::testing {

// -log of the summed probability of every frame labelling that collapses to
// `target`. logProbs is T x V row-major. Enumerates all V^T labellings.
inline double brute_force_ctc(const std::vector<double>& logProbs, std::size_t T, std::size_t V,
                              const std::vector<int>& target, int blank = 0) {
  std::vector<int> path(T, 0);
  double total = 0.0;
  for (;;) {
    std::vector<int> collapsed;
    int prev = -1;
    double logp = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      if (path[t] != prev && path[t] != blank) collapsed.push_back(path[t]);
      prev = path[t];
      logp += logProbs[t * V + std::size_t(path[t])];
    }
    if (collapsed == target) total += std::exp(logp);
    std::size_t t = 0;
    while (t < T && ++path[t] == int(V)) path[t++] = 0;
    if (t == T) break;
  }
  return -std::log(total);
}

}  // namespace mixrep::testing

#endif  // MIXREP_TESTS_CTC_ORACLE_H_
