// minirbt/eval.cpp

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

#include "minirbt/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "minirbt/rng.hpp"

namespace minirbt {

// ---------------------------------------------------------------------------
// TaskDataset

TaskDataset TaskDataset::FromExamples(const std::vector<TaskExample>& all) {
  if (all.empty()) throw std::runtime_error("task: no examples");
  TaskDataset ds;
  std::int64_t max_label = 0;
  for (const TaskExample& e : all) {
    if (e.label < 0)
      throw std::runtime_error("task: negative class id");
    max_label = std::max(max_label, e.label);
  }
  ds.classes = static_cast<std::size_t>(max_label) + 1;
  std::vector<std::uint8_t> seen(ds.classes, 0);
  for (const TaskExample& e : all) seen[e.label] = 1;
  for (std::size_t c = 0; c < ds.classes; ++c)
    if (!seen[c])
      throw std::runtime_error("task: class ids not dense, missing " +
                               std::to_string(c));
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (i % 5 == 4)
      ds.dev.push_back(all[i]);
    else
      ds.train.push_back(all[i]);
  }
  if (ds.dev.empty() || ds.train.empty())
    throw std::runtime_error("task: need enough examples for both splits");
  return ds;
}

TaskDataset TaskDataset::FromFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("task: cannot open " + path);
  std::vector<TaskExample> all;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("task: bad line '" + line + "'");
    TaskExample e;
    e.label = std::stoll(line.substr(0, tab));
    e.text = line.substr(tab + 1);
    all.push_back(std::move(e));
  }
  return FromExamples(all);
}

// ---------------------------------------------------------------------------
// Fine-tuning

namespace {

Batch TextBatch(const std::vector<const TaskExample*>& items,
                const Vocab& vocab, std::size_t max_len) {
  std::vector<MaskedSample> samples;
  for (const TaskExample* e : items) {
    MaskedSample s;
    auto toks = Tokenize(e->text, vocab);
    s.input_ids = TokensToIds(toks, vocab);
    s.labels.assign(s.input_ids.size(), kIgnoreLabel);
    s.attention_len = s.input_ids.size();
    samples.push_back(std::move(s));
  }
  return BuildBatch(samples, vocab, max_len);
}

std::size_t Argmax(const double* row, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < n; ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

}  // namespace

FineTuneResult FineTuneClassifier(EncoderModel& model, const Vocab& vocab,
                                  const TaskDataset& dataset,
                                  std::size_t epochs, double lr,
                                  std::uint64_t seed, std::size_t batch_size,
                                  std::size_t max_len) {
  std::size_t h = model.config().hidden;
  std::size_t C = dataset.classes;
  for (const auto& e : dataset.train)
    if (static_cast<std::size_t>(e.label) >= C)
      throw std::runtime_error("task: label out of range");

  // zero-init head: the untrained model predicts class 0 everywhere
  Parameter head_w("cls.head_w", Tensor({h, C}));
  Parameter head_b("cls.head_b", Tensor({C}));
  std::vector<Parameter*> params = model.parameters();
  params.push_back(&head_w);
  params.push_back(&head_b);
  AdamW opt(params);

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::vector<std::size_t> order(dataset.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(DeriveSeed(seed, 0x46494e45, epoch));
    rng.shuffle(order);
    for (std::size_t off = 0; off < order.size(); off += batch_size) {
      std::size_t n = std::min(batch_size, order.size() - off);
      std::vector<const TaskExample*> items;
      std::vector<std::int64_t> labels;
      for (std::size_t j = 0; j < n; ++j) {
        const TaskExample& e = dataset.train[order[off + j]];
        items.push_back(&e);
        labels.push_back(e.label);
      }
      Batch batch = TextBatch(items, vocab, max_len);
      Tape tape;
      ForwardGraph fg =
          EncoderForward::OnTape(model, tape, batch, false, true);
      Var logits = tape.add_rows(tape.matmul(fg.pooled, tape.param(head_w)),
                                 tape.param(head_b));
      Var loss = tape.cross_entropy_rows(logits, labels);
      for (Parameter* p : params) p->zero_grad();
      tape.backward(loss);
      ClipGradNorm(params, 1.0);
      opt.Step(lr);
    }
  }

  // dev accuracy
  std::size_t correct = 0;
  for (std::size_t off = 0; off < dataset.dev.size(); off += batch_size) {
    std::size_t n = std::min(batch_size, dataset.dev.size() - off);
    std::vector<const TaskExample*> items;
    for (std::size_t j = 0; j < n; ++j)
      items.push_back(&dataset.dev[off + j]);
    Batch batch = TextBatch(items, vocab, max_len);
    ForwardResult fr =
        EncoderForward::NoGrad(model, batch, false, true, false);
    Tensor logits = kernels::AddRows(kernels::Matmul(fr.pooled, head_w.value),
                                     head_b.value);
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t pred = Argmax(logits.data.data() + j * C, C);
      if (static_cast<std::int64_t>(pred) == dataset.dev[off + j].label)
        ++correct;
    }
  }
  FineTuneResult r;
  r.dev_accuracy =
      static_cast<double>(correct) / static_cast<double>(dataset.dev.size());
  return r;
}

double FineTuneMeanAccuracy(const std::string& ckpt_path, const Vocab& vocab,
                            const TaskDataset& dataset, std::size_t epochs,
                            double lr, const std::vector<std::uint64_t>& seeds,
                            std::size_t batch_size, std::size_t max_len) {
  if (seeds.empty()) throw std::invalid_argument("finetune: no seeds");
  double sum = 0.0;
  for (std::uint64_t s : seeds) {
    EncoderModel model = EncoderModel::Load(ckpt_path);
    sum += FineTuneClassifier(model, vocab, dataset, epochs, lr, s, batch_size,
                              max_len)
               .dev_accuracy;
  }
  return sum / static_cast<double>(seeds.size());
}

// ---------------------------------------------------------------------------
// Benchmark

namespace {

double EstimateActivationBytes(const ModelConfig& c, std::size_t seq,
                               std::size_t batch) {
  double bs = static_cast<double>(batch * seq);
  double act = bs * (6.0 * c.hidden + 2.0 * c.ffn) +
               2.0 * static_cast<double>(seq) * static_cast<double>(seq);
  double params = static_cast<double>(CountParameters(c).total);
  return 8.0 * (act + params);
}

}  // namespace

BenchReport BenchmarkInference(
    const std::vector<std::pair<std::string, ModelConfig>>& configs,
    std::size_t seq_len, std::size_t batch, std::size_t trials,
    std::size_t warmup) {
  if (configs.empty())
    throw std::invalid_argument("bench: no configs");
  BenchReport report;
  report.seq_len = seq_len;
  report.batch = batch;
  report.trials = trials;
  report.warmup = warmup;
  report.environment = "single-threaded CPU, 64-bit floats, warmup=" +
                       std::to_string(warmup) + " median-of-" +
                       std::to_string(trials);

  constexpr double kMemoryLimitBytes = 3e9;
  for (const auto& [name, cfg] : configs) {
    BenchEntry e;
    e.name = name;
    e.config = cfg;
    e.flops = EstimateFlops(cfg, seq_len);
    if (seq_len > cfg.max_positions) {
      e.skipped = true;
      e.note = "seq_len exceeds max_positions";
      report.entries.push_back(std::move(e));
      continue;
    }
    if (EstimateActivationBytes(cfg, seq_len, batch) > kMemoryLimitBytes) {
      e.skipped = true;
      e.note = "skipped: estimated memory above limit";
      report.entries.push_back(std::move(e));
      continue;
    }
    EncoderModel model = EncoderModel::Init(cfg, 7);
    Rng rng(0xBE);
    Batch b;
    b.batch = batch;
    b.max_len = seq_len;
    b.input_ids.resize(batch * seq_len);
    for (auto& id : b.input_ids)
      id = static_cast<std::int64_t>(rng.next_below(cfg.vocab_size));
    b.labels.assign(batch * seq_len, kIgnoreLabel);
    b.lengths.assign(batch, seq_len);

    for (std::size_t w = 0; w < warmup; ++w)
      EncoderForward::NoGrad(model, b, false, true, false);
    for (std::size_t t = 0; t < trials; ++t) {
      auto t0 = std::chrono::steady_clock::now();
      EncoderForward::NoGrad(model, b, false, true, false);
      auto t1 = std::chrono::steady_clock::now();
      e.trials_ms.push_back(
          std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::vector<double> sorted = e.trials_ms;
    std::sort(sorted.begin(), sorted.end());
    e.median_ms = sorted[sorted.size() / 2];
    report.entries.push_back(std::move(e));
  }

  const BenchEntry& ref = report.entries.front();
  for (BenchEntry& e : report.entries) {
    e.flops_ratio = ref.flops / e.flops;
    if (!e.skipped && !ref.skipped && e.median_ms > 0.0)
      e.wallclock_speedup = ref.median_ms / e.median_ms;
  }
  return report;
}

void BenchReport::Print(std::ostream& os) const {
  os << "# inference benchmark  seq=" << seq_len << " batch=" << batch
     << "  (" << environment << ")\n";
  os << "# name\tmedian_ms\tflops\tflops_ratio\twallclock_speedup\tnote\n";
  char buf[512];
  for (const BenchEntry& e : entries) {
    if (e.skipped) {
      os << e.name << "\t-\t" << e.flops << "\t" << e.flops_ratio << "\t-\t"
         << e.note << "\n";
      continue;
    }
    std::snprintf(buf, sizeof(buf), "%s\t%.3f\t%.6g\t%.3f\t%.3f\t%s\n",
                  e.name.c_str(), e.median_ms, e.flops, e.flops_ratio,
                  e.wallclock_speedup, e.note.c_str());
    os << buf;
  }
  os << "# raw trials (ms)\n";
  for (const BenchEntry& e : entries) {
    if (e.skipped) continue;
    os << e.name;
    for (double t : e.trials_ms) {
      std::snprintf(buf, sizeof(buf), "\t%.3f", t);
      os << buf;
    }
    os << "\n";
  }
}

void BenchReport::Save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("bench: cannot write " + path);
  Print(out);
}

// ---------------------------------------------------------------------------
// Pipeline comparison

PipelineComparison ComparePipelines(const PipelineReport& two_stage,
                                    const PipelineReport& one_stage) {
  if (two_stage.pipeline != "two_stage" || one_stage.pipeline != "one_stage")
    throw std::invalid_argument("compare: expected a two_stage and a "
                                "one_stage report");
  if (two_stage.budget_steps != one_stage.budget_steps)
    throw std::invalid_argument(
        "compare: step budgets differ (" +
        std::to_string(two_stage.budget_steps) + " vs " +
        std::to_string(one_stage.budget_steps) + "); refusing comparison");
  if (two_stage.seed != one_stage.seed)
    throw std::invalid_argument("compare: seeds differ; refusing comparison");
  PipelineComparison c;
  c.budget_steps = two_stage.budget_steps;
  c.seed = two_stage.seed;
  c.final_loss_two = two_stage.stages.back().last_window_mean;
  c.final_loss_one = one_stage.stages.back().last_window_mean;
  c.heldout_two = two_stage.heldout_mlm_accuracy;
  c.heldout_one = one_stage.heldout_mlm_accuracy;
  return c;
}

std::string PipelineComparison::ToText() const {
  std::ostringstream os;
  char buf[256];
  os << "# pipeline comparison  budget=" << budget_steps << " seed=" << seed
     << "\n";
  os << "# pipeline\tfinal_distill_loss\theldout_mlm_acc";
  if (toy_two >= 0.0) os << "\ttoy_task_acc";
  os << "\n";
  std::snprintf(buf, sizeof(buf), "two-stage\t%.6g\t%.6g", final_loss_two,
                heldout_two);
  os << buf;
  if (toy_two >= 0.0) {
    std::snprintf(buf, sizeof(buf), "\t%.6g", toy_two);
    os << buf;
  }
  os << "\n";
  std::snprintf(buf, sizeof(buf), "one-stage\t%.6g\t%.6g", final_loss_one,
                heldout_one);
  os << buf;
  if (toy_one >= 0.0) {
    std::snprintf(buf, sizeof(buf), "\t%.6g", toy_one);
    os << buf;
  }
  os << "\n";
  return os.str();
}

}  // namespace minirbt
