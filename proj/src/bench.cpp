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

#include "capforge/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <Eigen/Core>
#include <json.hpp>

#include "capforge/errors.hpp"
#include "capforge/synthetic.hpp"

namespace capforge::pipeline {

double percentile(std::vector<double> samples, double q) {
  if (samples.empty()) throw InvalidArgument("percentile: no samples");
  if (!(q > 0 && q <= 1)) throw InvalidArgument("percentile: q must lie in (0, 1]");
  std::sort(samples.begin(), samples.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(samples.size())));
  return samples[std::max<std::size_t>(rank, 1) - 1];
}

LatencyStats summarize(const std::vector<double>& samples) {
  LatencyStats s;
  s.samples = samples.size();
  s.p50 = percentile(samples, 0.50);
  s.p95 = percentile(samples, 0.95);
  s.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(s.samples);
  s.max = *std::max_element(samples.begin(), samples.end());
  return s;
}

LatencyReport bench(const Pipeline& pipeline, const BenchOptions& options) {
  if (options.n == 0) throw InvalidArgument("bench: n must be at least 1");
  const int previous_threads = Eigen::nbThreads();
  if (options.single_threaded) Eigen::setNbThreads(1);

  const auto corpus = synth::generate_corpus(options.seed, options.n + options.warmup);
  std::map<std::string, std::vector<double>> per_stage;
  std::vector<double> total;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    const auto result = pipeline.caption(corpus[i].image);
    const std::chrono::duration<double, std::milli> elapsed =
        std::chrono::steady_clock::now() - start;
    if (i < options.warmup) continue;
    total.push_back(elapsed.count());
    for (const auto& [stage, ms] : result.stage_latencies) per_stage[stage].push_back(ms);
  }
  if (options.single_threaded) Eigen::setNbThreads(previous_threads);

  LatencyReport report;
  for (const auto& [stage, samples] : per_stage) report.stages[stage] = summarize(samples);
  report.end_to_end = summarize(total);
  report.warmup = options.warmup;
  report.single_threaded = options.single_threaded;
  report.budget_ms = pipeline.config().latency_budget_ms;
  report.within_budget = report.end_to_end.p50 <= report.budget_ms;
  return report;
}

std::string to_json(const LatencyReport& report) {
  auto stats = [](const LatencyStats& s) {
    return nlohmann::json{{"samples", s.samples}, {"p50_ms", s.p50}, {"p95_ms", s.p95},
                          {"mean_ms", s.mean},    {"max_ms", s.max}};
  };
  nlohmann::json stages = nlohmann::json::object();
  for (const auto& [name, s] : report.stages) stages[name] = stats(s);
  return nlohmann::json{{"stages", stages},
                        {"end_to_end", stats(report.end_to_end)},
                        {"warmup", report.warmup},
                        {"single_threaded", report.single_threaded},
                        {"budget_ms", report.budget_ms},
                        {"within_budget", report.within_budget}}
      .dump();
}

}  // namespace capforge::pipeline
