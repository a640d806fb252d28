// minirbt/eval.hpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MINIRBT_EVAL_HPP_
#define MINIRBT_EVAL_HPP_

#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "minirbt/encoder.hpp"
#include "minirbt/tokenizer.hpp"
#include "minirbt/trainer.hpp"

namespace minirbt {

struct TaskExample {
  std::int64_t label = 0;
  std::string text;
};

/// Labeled classification examples with a fixed train/dev split (every 5th
/// example goes to dev).
struct TaskDataset {
  std::vector<TaskExample> train, dev;
  std::size_t classes = 0;

  // file format: one example per line, "<label>\t<text>"
  static TaskDataset FromFile(const std::string& path);
  static TaskDataset FromExamples(const std::vector<TaskExample>& all);
};

struct FineTuneResult {
  double dev_accuracy = 0.0;
};

// Classification head on the pooler output, cross-entropy fine-tuning of
// the whole encoder; returns dev accuracy. Deterministic per seed.
FineTuneResult FineTuneClassifier(EncoderModel& model, const Vocab& vocab,
                                  const TaskDataset& dataset,
                                  std::size_t epochs, double lr,
                                  std::uint64_t seed,
                                  std::size_t batch_size = 8,
                                  std::size_t max_len = 32);

// mean dev accuracy over several seeds, reloading the checkpoint each time
double FineTuneMeanAccuracy(const std::string& ckpt_path, const Vocab& vocab,
                            const TaskDataset& dataset, std::size_t epochs,
                            double lr, const std::vector<std::uint64_t>& seeds,
                            std::size_t batch_size = 8,
                            std::size_t max_len = 32);

struct BenchEntry {
  std::string name;
  ModelConfig config;
  bool skipped = false;
  std::string note;
  double median_ms = 0.0;
  std::vector<double> trials_ms;  // raw trials, recorded
  double flops = 0.0;             // analytic, per sequence
  double flops_ratio = 1.0;       // reference / this
  double wallclock_speedup = 1.0; // reference median / this median
};

/// Inference benchmark standing in for the published speedup column: the
/// first config is the reference; FLOPs ratios are exact arithmetic,
/// wall-clock is median-of-trials after warmup, single-threaded.
struct BenchReport {
  std::size_t seq_len = 0, batch = 0, trials = 0, warmup = 0;
  std::string environment;
  std::vector<BenchEntry> entries;

  void Print(std::ostream& os) const;
  void Save(const std::string& path) const;
};

BenchReport BenchmarkInference(
    const std::vector<std::pair<std::string, ModelConfig>>& configs,
    std::size_t seq_len, std::size_t batch, std::size_t trials,
    std::size_t warmup = 5);

/// Side-by-side two-stage vs one-stage comparison; refuses mismatched
/// budgets or seeds, reports directions only.
struct PipelineComparison {
  std::size_t budget_steps = 0;
  std::uint64_t seed = 0;
  double final_loss_two = 0.0, final_loss_one = 0.0;
  double heldout_two = 0.0, heldout_one = 0.0;
  double toy_two = -1.0, toy_one = -1.0;  // optional, < 0 when absent

  std::string ToText() const;
};

PipelineComparison ComparePipelines(const PipelineReport& two_stage,
                                    const PipelineReport& one_stage);

}  // namespace minirbt

#endif  // MINIRBT_EVAL_HPP_
