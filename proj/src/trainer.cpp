// minirbt/trainer.cpp

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

#include "minirbt/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "minirbt/rng.hpp"

namespace minirbt {

namespace {

// stream tags for seed derivation
constexpr std::uint64_t kTagInit = 0x494e4954;      // model init
constexpr std::uint64_t kTagBatch = 0x42415443;     // batch composition
constexpr std::uint64_t kTagMask = 0x4d41534b;      // per-sentence masking
constexpr std::uint64_t kTagHeldout = 0x48454c44;   // held-out eval masks
constexpr std::uint64_t kTagProj = 0x50524f4a;      // distill projections

std::size_t WindowLen(std::size_t steps) {
  std::size_t w = std::min<std::size_t>(50, steps / 4);
  return std::max<std::size_t>(1, w);
}

double WindowMean(const std::vector<StepMetrics>& m, bool last) {
  if (m.empty()) return 0.0;
  std::size_t w = WindowLen(m.size());
  double s = 0.0;
  if (last) {
    for (std::size_t i = m.size() - w; i < m.size(); ++i) s += m[i].l_total;
  } else {
    for (std::size_t i = 0; i < w; ++i) s += m[i].l_total;
  }
  return s / static_cast<double>(w);
}

void FinishStage(StageReport* r) {
  r->first_window_mean = WindowMean(r->metrics, false);
  r->last_window_mean = WindowMean(r->metrics, true);
}

std::uint64_t StageTag(const std::string& name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

// ---------------------------------------------------------------------------
// TrainPlan

TrainPlan TrainPlan::FromFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("plan: cannot open " + path);
  TrainPlan p;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("plan: bad line '" + line + "'");
    p.Set(line.substr(0, eq), line.substr(eq + 1));
  }
  return p;
}

void TrainPlan::Set(const std::string& key, const std::string& value) {
  if (key == "mode") mode = value;
  else if (key == "teacher_config") teacher_config = value;
  else if (key == "assistant_config") assistant_config = value;
  else if (key == "student_config") student_config = value;
  else if (key == "corpus") corpus = value;
  else if (key == "lexicon") lexicon = value;
  else if (key == "vocab") vocab = value;
  else if (key == "teacher_ckpt") teacher_ckpt = value;
  else if (key == "out_dir") out_dir = value;
  else if (key == "strategy") strategy = value;
  else if (key == "steps") steps = std::stoull(value);
  else if (key == "stage1_steps") stage1_steps = std::stoull(value);
  else if (key == "stage2_steps") stage2_steps = std::stoull(value);
  else if (key == "batch_size") batch_size = std::stoull(value);
  else if (key == "max_len") max_len = std::stoull(value);
  else if (key == "seed") seed = std::stoull(value);
  else if (key == "temperature") temperature = std::stod(value);
  else if (key == "mask_rate") mask_rate = std::stod(value);
  else if (key == "peak_lr") peak_lr = std::stod(value);
  else if (key == "warmup_frac") warmup_frac = std::stod(value);
  else if (key == "ckpt_every") ckpt_every = std::stoull(value);
  else throw std::runtime_error("plan: unknown key '" + key + "'");
}

void TrainPlan::Validate() const {
  if (mode != "teacher_mlm" && mode != "one_stage" && mode != "two_stage")
    throw std::runtime_error("plan: mode must be teacher_mlm, one_stage or "
                             "two_stage, got '" + mode + "'");
  if (mode == "two_stage" && assistant_config.empty())
    throw std::runtime_error("plan: two_stage requires assistant_config");
  for (const std::string* f : {&corpus, &vocab}) {
    if (f->empty()) throw std::runtime_error("plan: corpus and vocab files "
                                             "are required");
    if (!std::filesystem::exists(*f))
      throw std::runtime_error("plan: referenced file missing: " + *f);
  }
  if (!lexicon.empty() && !std::filesystem::exists(lexicon))
    throw std::runtime_error("plan: referenced file missing: " + lexicon);
  if (mode != "teacher_mlm") {
    if (teacher_ckpt.empty() || !std::filesystem::exists(teacher_ckpt))
      throw std::runtime_error("plan: distillation requires an existing "
                               "teacher_ckpt");
    if (student_config.empty())
      throw std::runtime_error("plan: distillation requires student_config");
  }
  if (strategy != "wwm" && strategy != "char")
    throw std::runtime_error("plan: strategy must be wwm or char");
}

ModelConfig TrainPlan::ResolveConfig(const std::string& name_or_path,
                                     std::size_t vocab_size) const {
  ModelConfig c = std::filesystem::exists(name_or_path)
                      ? ModelConfig::FromFile(name_or_path)
                      : ModelConfig::Preset(name_or_path);
  if (vocab_size > 0) c.vocab_size = vocab_size;
  if (c.max_positions < max_len) c.max_positions = max_len;
  c.Validate();
  return c;
}

// ---------------------------------------------------------------------------
// Data pipeline

MlmDataPipeline::MlmDataPipeline(std::vector<std::string> corpus_lines,
                                 const Vocab& vocab, const Lexicon& lexicon,
                                 double mask_rate, std::size_t max_len,
                                 std::uint64_t base_seed,
                                 const std::string& strategy)
    : vocab_(vocab),
      mask_rate_(mask_rate),
      max_len_(max_len),
      base_seed_(base_seed),
      char_strategy_(strategy == "char") {
  if (corpus_lines.empty())
    throw std::runtime_error("data: corpus is empty");
  for (const std::string& line : corpus_lines) {
    auto toks = Tokenize(line, vocab);
    if (toks.empty()) continue;
    spans_.push_back(SegmentWords(toks, lexicon));
    tokens_.push_back(std::move(toks));
  }
  if (tokens_.empty())
    throw std::runtime_error("data: corpus has no tokenizable sentences");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    // every 10th sentence is held out, as long as training keeps >= 1
    if (i % 10 == 9 && tokens_.size() > 1)
      heldout_idx_.push_back(i);
    else
      train_idx_.push_back(i);
  }
}

MaskedSample MlmDataPipeline::SampleFor(std::size_t sentence,
                                        std::uint64_t epoch) const {
  std::uint64_t seed = DeriveSeed(base_seed_, kTagMask, epoch, sentence);
  if (char_strategy_)
    return GenerateCharMaskSample(tokens_[sentence], vocab_, mask_rate_, seed);
  return GenerateWwmSample(tokens_[sentence], spans_[sentence], vocab_,
                           mask_rate_, seed);
}

Batch MlmDataPipeline::BatchForStep(std::size_t step,
                                    std::size_t batch_size) const {
  std::vector<MaskedSample> samples;
  samples.reserve(batch_size);
  for (std::size_t j = 0; j < batch_size; ++j) {
    std::size_t sidx =
        train_idx_[DeriveSeed(base_seed_, kTagBatch, step, j) %
                   train_idx_.size()];
    samples.push_back(SampleFor(sidx, step));
  }
  return BuildBatch(samples, vocab_, max_len_);
}

std::vector<Batch> MlmDataPipeline::HeldoutBatches(
    std::size_t batch_size) const {
  std::vector<Batch> out;
  std::vector<MaskedSample> cur;
  for (std::size_t i = 0; i < heldout_idx_.size(); ++i) {
    std::size_t sidx = heldout_idx_[i];
    std::uint64_t seed = DeriveSeed(base_seed_, kTagHeldout, 0, sidx);
    cur.push_back(char_strategy_
                      ? GenerateCharMaskSample(tokens_[sidx], vocab_,
                                               mask_rate_, seed)
                      : GenerateWwmSample(tokens_[sidx], spans_[sidx], vocab_,
                                          mask_rate_, seed));
    if (cur.size() == batch_size) {
      out.push_back(BuildBatch(cur, vocab_, max_len_));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(BuildBatch(cur, vocab_, max_len_));
  return out;
}

double EvaluateMlmAccuracy(const EncoderModel& model,
                           const MlmDataPipeline& data,
                           std::size_t batch_size) {
  std::size_t correct = 0, total = 0;
  for (const Batch& b : data.HeldoutBatches(batch_size)) {
    ForwardResult fr =
        EncoderForward::NoGrad(model, b, true, false, false);
    std::size_t v = model.config().vocab_size;
    for (std::size_t r = 0; r < b.labels.size(); ++r) {
      if (b.labels[r] == kIgnoreLabel) continue;
      const double* row = fr.logits.data.data() + r * v;
      std::size_t best = 0;
      for (std::size_t j = 1; j < v; ++j)
        if (row[j] > row[best]) best = j;
      if (static_cast<std::int64_t>(best) == b.labels[r]) ++correct;
      ++total;
    }
  }
  return total == 0 ? 0.0
                    : static_cast<double>(correct) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Metrics / reports

void WriteMetrics(const std::string& path,
                  const std::vector<StepMetrics>& metrics) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("metrics: cannot write " + path);
  char buf[256];
  for (const StepMetrics& m : metrics) {
    std::snprintf(buf, sizeof(buf), "%zu\t%.17g\t%.17g\t%.17g\t%.17g\n",
                  m.step, m.lr, m.l_layer, m.l_pred, m.l_total);
    out << buf;
  }
}

void PipelineReport::Save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("report: cannot write " + path);
  char buf[256];
  out << "pipeline=" << pipeline << "\n";
  out << "seed=" << seed << "\n";
  out << "budget_steps=" << budget_steps << "\n";
  std::snprintf(buf, sizeof(buf), "heldout_mlm_accuracy=%.17g\n",
                heldout_mlm_accuracy);
  out << buf;
  std::snprintf(buf, sizeof(buf), "random_baseline=%.17g\n", random_baseline);
  out << buf;
  for (const StageReport& s : stages) {
    std::snprintf(buf, sizeof(buf),
                  "stage=%s steps=%zu first=%.17g last=%.17g\n",
                  s.name.c_str(), s.metrics.size(), s.first_window_mean,
                  s.last_window_mean);
    out << buf;
  }
}

PipelineReport PipelineReport::LoadSummary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("report: cannot open " + path);
  PipelineReport r;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("pipeline=", 0) == 0) r.pipeline = line.substr(9);
    else if (line.rfind("seed=", 0) == 0) r.seed = std::stoull(line.substr(5));
    else if (line.rfind("budget_steps=", 0) == 0)
      r.budget_steps = std::stoull(line.substr(13));
    else if (line.rfind("heldout_mlm_accuracy=", 0) == 0)
      r.heldout_mlm_accuracy = std::stod(line.substr(21));
    else if (line.rfind("random_baseline=", 0) == 0)
      r.random_baseline = std::stod(line.substr(16));
    else if (line.rfind("stage=", 0) == 0) {
      StageReport s;
      std::istringstream is(line);
      std::string field;
      while (is >> field) {
        auto eq = field.find('=');
        std::string k = field.substr(0, eq), v = field.substr(eq + 1);
        if (k == "stage") s.name = v;
        else if (k == "first") s.first_window_mean = std::stod(v);
        else if (k == "last") s.last_window_mean = std::stod(v);
        else if (k == "steps") s.metrics.resize(std::stoull(v));
      }
      r.stages.push_back(std::move(s));
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Teacher MLM pre-training

namespace {

void SaveTrainingCheckpoint(const std::string& path, EncoderModel& model,
                            const std::vector<Parameter*>& extra_params,
                            const AdamW& opt, std::size_t step) {
  Container c;
  const ModelConfig& cfg = model.config();
  c.meta = {{"kind", "train_state"},
            {"layers", std::to_string(cfg.layers)},
            {"hidden", std::to_string(cfg.hidden)},
            {"ffn", std::to_string(cfg.ffn)},
            {"heads", std::to_string(cfg.heads)},
            {"vocab_size", std::to_string(cfg.vocab_size)},
            {"max_positions", std::to_string(cfg.max_positions)},
            {"type_vocab", std::to_string(cfg.type_vocab)},
            {"train.step", std::to_string(step)}};
  for (Parameter* p : model.trainable_parameters())
    c.tensors.emplace_back(p->name, p->value);
  for (Parameter* p : extra_params) c.tensors.emplace_back(p->name, p->value);
  opt.ExportState(&c);
  SaveContainer(path, c);
}

std::size_t LoadTrainingCheckpoint(const std::string& path,
                                   EncoderModel& model,
                                   const std::vector<Parameter*>& extra_params,
                                   AdamW& opt) {
  Container c = LoadContainer(path);
  for (Parameter* p : model.trainable_parameters()) {
    const Tensor* t = c.find_tensor(p->name);
    if (!t) throw std::runtime_error("resume: missing tensor " + p->name);
    p->value = *t;
  }
  for (Parameter* p : extra_params) {
    const Tensor* t = c.find_tensor(p->name);
    if (!t) throw std::runtime_error("resume: missing tensor " + p->name);
    p->value = *t;
  }
  opt.ImportState(c);
  const std::string* s = c.find_meta("train.step");
  if (!s) throw std::runtime_error("resume: checkpoint lacks train.step");
  return std::stoull(*s);
}

}  // namespace

PipelineReport TrainMlm(const TrainPlan& plan, const std::string& resume_ckpt) {
  if (plan.mode != "teacher_mlm")
    throw std::runtime_error("train_mlm: plan mode is '" + plan.mode + "'");
  plan.Validate();
  std::filesystem::create_directories(plan.out_dir);

  Vocab vocab = Vocab::FromFile(plan.vocab);
  Lexicon lexicon =
      plan.lexicon.empty() ? Lexicon() : Lexicon::FromFile(plan.lexicon);
  MlmDataPipeline data(LoadCorpus(plan.corpus), vocab, lexicon, plan.mask_rate,
                       plan.max_len, plan.seed, plan.strategy);

  ModelConfig cfg = plan.ResolveConfig(plan.teacher_config, vocab.size());
  EncoderModel model =
      EncoderModel::Init(cfg, DeriveSeed(plan.seed, kTagInit, 0));
  std::vector<Parameter*> params = model.trainable_parameters();
  AdamW opt(params);
  Schedule sched{plan.peak_lr, plan.warmup_frac, plan.steps};

  std::size_t start = 0;
  if (!resume_ckpt.empty())
    start = LoadTrainingCheckpoint(resume_ckpt, model, {}, opt);

  StageReport stage;
  stage.name = "teacher_mlm";
  for (std::size_t step = start; step < plan.steps; ++step) {
    Batch batch = data.BatchForStep(step, plan.batch_size);
    Tape tape;
    ForwardGraph fg = EncoderForward::OnTape(model, tape, batch, true, false);
    Var loss = tape.cross_entropy_rows(fg.logits, batch.labels);
    double lv = tape.value(loss).data[0];
    model.zero_grads();
    tape.backward(loss);
    ClipGradNorm(params, 1.0);
    double lr = sched.lr(step);
    opt.Step(lr);
    stage.metrics.push_back({step, lr, 0.0, lv, lv});
    if (plan.ckpt_every > 0 && (step + 1) % plan.ckpt_every == 0)
      SaveTrainingCheckpoint(
          plan.out_dir + "/teacher_train_" + std::to_string(step + 1) + ".ckpt",
          model, {}, opt, step + 1);
  }
  FinishStage(&stage);

  model.Save(plan.out_dir + "/teacher.ckpt");
  SaveTrainingCheckpoint(plan.out_dir + "/teacher_train.ckpt", model, {}, opt,
                         plan.steps);
  WriteMetrics(plan.out_dir + "/teacher_metrics.tsv", stage.metrics);

  PipelineReport report;
  report.pipeline = "teacher_mlm";
  report.seed = plan.seed;
  report.budget_steps = plan.steps;
  report.heldout_mlm_accuracy =
      EvaluateMlmAccuracy(model, data, plan.batch_size);
  report.random_baseline = 1.0 / static_cast<double>(vocab.size());
  report.stages.push_back(std::move(stage));
  report.Save(plan.out_dir + "/teacher_report.txt");
  return report;
}

// ---------------------------------------------------------------------------
// Distillation

StageReport DistillStage(const EncoderModel& teacher, EncoderModel& student,
                         DistillConfig& distill, const TrainPlan& plan,
                         std::size_t steps, const MlmDataPipeline& data,
                         const std::string& metrics_path,
                         const std::string& stage_name,
                         const std::string& resume_ckpt,
                         const std::string& ckpt_prefix) {
  distill.layer_map.Validate(student.config().layers,
                             teacher.config().layers);
  if (distill.projections.size() != distill.layer_map.pairs.size())
    throw std::runtime_error("distill: projections not initialized for the "
                             "layer map");
  std::uint64_t teacher_hash = teacher.ParameterHash();

  std::vector<Parameter*> params = student.trainable_parameters();
  std::vector<Parameter*> proj_params;
  for (Parameter& p : distill.projections) proj_params.push_back(&p);
  std::vector<Parameter*> all = params;
  all.insert(all.end(), proj_params.begin(), proj_params.end());

  AdamW opt(all);
  Schedule sched{plan.peak_lr, plan.warmup_frac, steps};
  std::size_t start = 0;
  if (!resume_ckpt.empty())
    start = LoadTrainingCheckpoint(resume_ckpt, student, proj_params, opt);

  StageReport stage;
  stage.name = stage_name;
  for (std::size_t step = start; step < steps; ++step) {
    Batch batch = data.BatchForStep(step, plan.batch_size);
    ForwardResult tout =
        EncoderForward::NoGrad(teacher, batch, true, false, true);
    Tape tape;
    ForwardGraph sg = EncoderForward::OnTape(student, tape, batch, true, false);

    std::vector<std::uint8_t> label_mask(batch.labels.size(), 0);
    if (distill.pred_all_positions) {
      label_mask = sg.nonpad_rows;
    } else {
      for (std::size_t r = 0; r < batch.labels.size(); ++r)
        if (batch.labels[r] != kIgnoreLabel) label_mask[r] = 1;
    }

    Var l_hidden = HiddenLoss(tape, sg.hidden_states, tout.hidden_states,
                              distill, sg.nonpad_rows);
    Var l_pred = PredictionLoss(tape, sg.logits, tout.logits,
                                distill.temperature, label_mask);
    Var l_total = TotalDistillLoss(tape, l_hidden, l_pred,
                                   distill.hidden_weight, distill.pred_weight);

    for (Parameter* p : all) p->zero_grad();
    tape.backward(l_total);
    ClipGradNorm(all, 1.0);
    double lr = sched.lr(step);
    opt.Step(lr);
    stage.metrics.push_back({step, lr, tape.value(l_hidden).data[0],
                             tape.value(l_pred).data[0],
                             tape.value(l_total).data[0]});
    if (plan.ckpt_every > 0 && !ckpt_prefix.empty() &&
        (step + 1) % plan.ckpt_every == 0)
      SaveTrainingCheckpoint(
          ckpt_prefix + "_" + std::to_string(step + 1) + ".ckpt", student,
          proj_params, opt, step + 1);
  }
  FinishStage(&stage);
  WriteMetrics(metrics_path, stage.metrics);

  if (teacher.ParameterHash() != teacher_hash)
    throw std::logic_error("distill: teacher parameters changed during " +
                           stage_name);
  return stage;
}

namespace {

struct DistillContext {
  Vocab vocab;
  Lexicon lexicon;
  std::vector<std::string> corpus;
  EncoderModel teacher;
};

DistillContext LoadDistillContext(const TrainPlan& plan) {
  plan.Validate();
  std::filesystem::create_directories(plan.out_dir);
  Vocab vocab = Vocab::FromFile(plan.vocab);
  Lexicon lexicon =
      plan.lexicon.empty() ? Lexicon() : Lexicon::FromFile(plan.lexicon);
  EncoderModel teacher = EncoderModel::Load(plan.teacher_ckpt);
  if (teacher.config().vocab_size != vocab.size())
    throw std::runtime_error("distill: teacher vocab_size does not match the "
                             "vocab file");
  return {std::move(vocab), std::move(lexicon), LoadCorpus(plan.corpus),
          std::move(teacher)};
}

StageReport RunStage(const TrainPlan& plan, const DistillContext& ctx,
                     const EncoderModel& teacher, EncoderModel& student,
                     std::size_t steps, const std::string& stage_name) {
  DistillConfig d;
  d.temperature = plan.temperature;
  d.layer_map =
      UniformLayerMap(student.config().layers, teacher.config().layers);
  d.InitProjections(student.config().hidden, teacher.config().hidden,
                    DeriveSeed(plan.seed, kTagProj, StageTag(stage_name)));
  MlmDataPipeline data(ctx.corpus, ctx.vocab, ctx.lexicon, plan.mask_rate,
                       plan.max_len, DeriveSeed(plan.seed, StageTag(stage_name)),
                       plan.strategy);
  return DistillStage(teacher, student, d, plan, steps, data,
                      plan.out_dir + "/" + stage_name + "_metrics.tsv",
                      stage_name, "", plan.out_dir + "/" + stage_name);
}

}  // namespace

PipelineReport TwoStagePipeline(const TrainPlan& plan) {
  if (plan.mode != "two_stage")
    throw std::runtime_error("two_stage_pipeline: plan mode is '" + plan.mode +
                             "'");
  DistillContext ctx = LoadDistillContext(plan);

  PipelineReport report;
  report.pipeline = "two_stage";
  report.seed = plan.seed;
  report.budget_steps = plan.stage2_steps;
  report.random_baseline = 1.0 / static_cast<double>(ctx.vocab.size());

  ModelConfig acfg = plan.ResolveConfig(plan.assistant_config,
                                        ctx.vocab.size());
  EncoderModel assistant =
      EncoderModel::Init(acfg, DeriveSeed(plan.seed, kTagInit, 1));
  try {
    report.stages.push_back(RunStage(plan, ctx, ctx.teacher, assistant,
                                     plan.stage1_steps, "stage1"));
  } catch (const std::exception& e) {
    throw std::runtime_error(
        std::string("two_stage: stage1 failed, stage2 not run: ") + e.what());
  }
  assistant.Save(plan.out_dir + "/assistant.ckpt");

  ModelConfig scfg = plan.ResolveConfig(plan.student_config, ctx.vocab.size());
  EncoderModel student =
      EncoderModel::Init(scfg, DeriveSeed(plan.seed, kTagInit, 2));
  report.stages.push_back(
      RunStage(plan, ctx, assistant, student, plan.stage2_steps, "stage2"));
  student.Save(plan.out_dir + "/student.ckpt");

  MlmDataPipeline eval_data(ctx.corpus, ctx.vocab, ctx.lexicon, plan.mask_rate,
                            plan.max_len, plan.seed, plan.strategy);
  report.heldout_mlm_accuracy =
      EvaluateMlmAccuracy(student, eval_data, plan.batch_size);
  report.Save(plan.out_dir + "/two_stage_report.txt");
  return report;
}

PipelineReport OneStagePipeline(const TrainPlan& plan) {
  if (plan.mode != "one_stage")
    throw std::runtime_error("one_stage_pipeline: plan mode is '" + plan.mode +
                             "'");
  DistillContext ctx = LoadDistillContext(plan);

  PipelineReport report;
  report.pipeline = "one_stage";
  report.seed = plan.seed;
  report.budget_steps = plan.stage2_steps;
  report.random_baseline = 1.0 / static_cast<double>(ctx.vocab.size());

  ModelConfig scfg = plan.ResolveConfig(plan.student_config, ctx.vocab.size());
  EncoderModel student =
      EncoderModel::Init(scfg, DeriveSeed(plan.seed, kTagInit, 2));
  // same step budget as two-stage's stage 2, for a fair comparison
  report.stages.push_back(RunStage(plan, ctx, ctx.teacher, student,
                                   plan.stage2_steps, "stage2"));
  student.Save(plan.out_dir + "/student_one_stage.ckpt");

  MlmDataPipeline eval_data(ctx.corpus, ctx.vocab, ctx.lexicon, plan.mask_rate,
                            plan.max_len, plan.seed, plan.strategy);
  report.heldout_mlm_accuracy =
      EvaluateMlmAccuracy(student, eval_data, plan.batch_size);
  report.Save(plan.out_dir + "/one_stage_report.txt");
  return report;
}

}  // namespace minirbt
