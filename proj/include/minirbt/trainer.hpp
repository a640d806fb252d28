// minirbt/trainer.hpp

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

#ifndef MINIRBT_TRAINER_HPP_
#define MINIRBT_TRAINER_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "minirbt/distill.hpp"
#include "minirbt/encoder.hpp"
#include "minirbt/optimizer.hpp"
#include "minirbt/tokenizer.hpp"

namespace minirbt {

/// Declarative description of one run. Loaded from a key=value plan file;
/// CLI flags override file values.
struct TrainPlan {
  std::string mode;  // teacher_mlm | one_stage | two_stage
  std::string teacher_config;    // preset name or config file path
  std::string assistant_config;  // required for two_stage
  std::string student_config;
  std::string corpus;
  std::string lexicon;
  std::string vocab;
  std::string teacher_ckpt;  // distillation source (output of teacher_mlm)
  std::string out_dir = ".";
  std::string strategy = "wwm";  // wwm | char
  std::size_t steps = 300;         // teacher_mlm budget
  std::size_t stage1_steps = 300;  // teacher -> assistant
  std::size_t stage2_steps = 300;  // assistant/teacher -> student
  std::size_t batch_size = 16;
  std::size_t max_len = 32;
  std::uint64_t seed = 42;
  double temperature = 8.0;
  double mask_rate = 0.15;
  double peak_lr = 4e-4;
  double warmup_frac = 0.1;
  std::size_t ckpt_every = 0;  // 0 = final only

  static TrainPlan FromFile(const std::string& path);
  void Set(const std::string& key, const std::string& value);
  void Validate() const;

  ModelConfig ResolveConfig(const std::string& name_or_path,
                            std::size_t vocab_size) const;
};

struct StepMetrics {
  std::size_t step = 0;
  double lr = 0.0;
  double l_layer = 0.0;
  double l_pred = 0.0;
  double l_total = 0.0;
};

struct StageReport {
  std::string name;
  std::vector<StepMetrics> metrics;
  double first_window_mean = 0.0;
  double last_window_mean = 0.0;
  double window_decrease() const {
    return first_window_mean > 0.0
               ? 1.0 - last_window_mean / first_window_mean
               : 0.0;
  }
};

struct PipelineReport {
  std::string pipeline;  // teacher_mlm | one_stage | two_stage
  std::uint64_t seed = 0;
  std::size_t budget_steps = 0;  // student-facing step budget
  std::vector<StageReport> stages;
  double heldout_mlm_accuracy = -1.0;
  double random_baseline = 0.0;  // 1/vocab

  void Save(const std::string& path) const;
  static PipelineReport LoadSummary(const std::string& path);
};

/// Dynamic-masking data source. Sentences are tokenized and segmented once;
/// masks are re-drawn per step from seeds derived as
/// (base_seed, epoch, sentence_index), so generation is pure and resumable.
class MlmDataPipeline {
 public:
  MlmDataPipeline(std::vector<std::string> corpus_lines, const Vocab& vocab,
                  const Lexicon& lexicon, double mask_rate,
                  std::size_t max_len, std::uint64_t base_seed,
                  const std::string& strategy = "wwm");

  Batch BatchForStep(std::size_t step, std::size_t batch_size) const;
  // fixed-seed masked batches over the held-out split
  std::vector<Batch> HeldoutBatches(std::size_t batch_size) const;
  std::size_t train_size() const { return train_idx_.size(); }
  std::size_t heldout_size() const { return heldout_idx_.size(); }
  const Vocab& vocab() const { return vocab_; }

 private:
  MaskedSample SampleFor(std::size_t sentence, std::uint64_t epoch) const;

  const Vocab& vocab_;
  std::vector<std::vector<std::string>> tokens_;
  std::vector<std::vector<WordSpan>> spans_;
  std::vector<std::size_t> train_idx_, heldout_idx_;
  double mask_rate_;
  std::size_t max_len_;
  std::uint64_t base_seed_;
  bool char_strategy_ = false;
};

// Masked-token top-1 accuracy over the held-out split.
double EvaluateMlmAccuracy(const EncoderModel& model,
                           const MlmDataPipeline& data,
                           std::size_t batch_size);

// Cross-entropy MLM pre-training of the (desk-scale) teacher. Writes
// teacher.ckpt, teacher_metrics.tsv and teacher_report.txt under
// plan.out_dir. resume_ckpt restarts from a training checkpoint and must
// reproduce the uninterrupted run exactly.
PipelineReport TrainMlm(const TrainPlan& plan,
                        const std::string& resume_ckpt = "");

// One distillation stage: frozen teacher, student + projections trained on
// the combined hidden/prediction loss.
StageReport DistillStage(const EncoderModel& teacher, EncoderModel& student,
                         DistillConfig& distill, const TrainPlan& plan,
                         std::size_t steps, const MlmDataPipeline& data,
                         const std::string& metrics_path,
                         const std::string& stage_name,
                         const std::string& resume_ckpt = "",
                         const std::string& ckpt_prefix = "");

// teacher -> assistant -> student; emits assistant.ckpt, student.ckpt and a
// report with both stages' curves plus held-out student accuracy.
PipelineReport TwoStagePipeline(const TrainPlan& plan);

// direct teacher -> student under the stage-2 step budget
PipelineReport OneStagePipeline(const TrainPlan& plan);

void WriteMetrics(const std::string& path,
                  const std::vector<StepMetrics>& metrics);

}  // namespace minirbt

#endif  // MINIRBT_TRAINER_HPP_
