// Copyright 2026 The Caption Forge Authors.
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

#ifndef CAPFORGE_BENCH_HPP_
#define CAPFORGE_BENCH_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "capforge/pipeline.hpp"

namespace capforge::pipeline {

struct LatencyStats {
  std::size_t samples = 0;
  double p50 = 0;
  double p95 = 0;
  double mean = 0;
  double max = 0;
};

// Nearest-rank percentile, q in (0, 1]. Throws on an empty sample.
double percentile(std::vector<double> samples, double q);
LatencyStats summarize(const std::vector<double>& samples);

struct LatencyReport {
  std::map<std::string, LatencyStats> stages;
  LatencyStats end_to_end;
  std::size_t warmup = 0;
  bool single_threaded = false;
  double budget_ms = 0;
  bool within_budget = false;  // end-to-end p50 <= budget
};

struct BenchOptions {
  std::size_t n = 100;
  std::size_t warmup = 10;
  std::uint64_t seed = 7;
  // Restrict linear algebra to the calling thread.
  bool single_threaded = true;
};

// Captions n + warmup seeded synthetic images, discarding the first warmup
// timings. Throws InvalidArgument when n is zero.
LatencyReport bench(const Pipeline& pipeline, const BenchOptions& options);

std::string to_json(const LatencyReport& report);

}  // namespace capforge::pipeline

#endif  // CAPFORGE_BENCH_HPP_
