// tests/acceptance.cpp

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

// End-to-end gate: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria 5-7 share one desk-scale pipeline run.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "minirbt/distill.hpp"
#include "minirbt/eval.hpp"
#include "testutil.hpp"

using namespace minirbt;
namespace fs = std::filesystem;

namespace {

struct Gate {
  int failures = 0;

  void Report(int criterion, bool ok, const std::string& detail) {
    std::printf("criterion %d: %s%s%s\n", criterion, ok ? "PASS" : "FAIL",
                detail.empty() ? "" : "  -- ", detail.c_str());
    if (!ok) ++failures;
  }
};

double Ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

// ---------------------------------------------------------------------------
// 1: parameter counts on the six published configs

void Criterion1(Gate& g) {
  struct Row {
    const char* preset;
    double total_m, non_emb_m;
  };
  const Row rows[] = {
      {"roberta-wwm", 102.3, 85.7}, {"rbt6", 59.8, 43.1},
      {"rbt3", 38.5, 21.9},         {"rbt4-h312", 11.4, 4.7},
      {"minirbt-h256", 10.4, 4.8},  {"minirbt-h288", 12.3, 6.1},
  };
  auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::string detail;
  for (const Row& r : rows) {
    ParamCount pc = CountParameters(ModelConfig::Preset(r.preset));
    double et = std::fabs(pc.total / 1e6 - r.total_m) / r.total_m;
    double en =
        std::fabs(pc.non_embedding / 1e6 - r.non_emb_m) / r.non_emb_m;
    if (et >= 0.01 || en >= 0.01) {
      ok = false;
      detail += std::string(r.preset) + " off by >1%; ";
    }
  }
  double ms = Ms(t0);
  if (ms >= 1000.0) {
    ok = false;
    detail += "runtime " + std::to_string(ms) + " ms >= 1 s";
  }
  g.Report(1, ok, detail);
}

// ---------------------------------------------------------------------------
// 2: FLOPs ordering and the >= 6.8x bound at seq 512

void Criterion2(Gate& g) {
  double teacher = EstimateFlops(ModelConfig::Preset("roberta-wwm"), 512);
  auto ratio = [&](const char* name) {
    return teacher / EstimateFlops(ModelConfig::Preset(name), 512);
  };
  double rbt6 = ratio("rbt6"), rbt3 = ratio("rbt3");
  double h288 = ratio("minirbt-h288"), h256 = ratio("minirbt-h256");
  double h312 = ratio("rbt4-h312");
  bool ok = rbt6 < rbt3 && rbt3 < h288 && h288 < h256 && h288 < h312 &&
            h256 >= 6.8;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "ratios rbt6=%.2f rbt3=%.2f h288=%.2f h256=%.2f h312=%.2f",
                rbt6, rbt3, h288, h256, h312);
  g.Report(2, ok, ok ? "" : buf);
}

// ---------------------------------------------------------------------------
// 3: WWM atomicity over >= 10,000 samples plus the published example

void Criterion3(Gate& g) {
  bool ok = true;
  std::string detail;

  // random mixed CJK/Latin corpora
  std::vector<std::string> ascii_heads = {"pro", "un", "use", "model"};
  std::vector<std::string> ascii_tails = {"##babi", "##lity", "##d", "##aff"};
  std::vector<std::string> vocab_toks = {"[PAD]", "[UNK]", "[CLS]", "[SEP]",
                                         "[MASK]"};
  for (const auto& t : ascii_heads) vocab_toks.push_back(t);
  for (const auto& t : ascii_tails) vocab_toks.push_back(t);
  for (std::uint32_t cp = 0x4E00; cp < 0x4E00 + 120; ++cp)
    vocab_toks.push_back(Utf8Encode({cp}));
  Vocab vocab(vocab_toks);

  std::vector<std::string> lex_words;
  for (std::uint32_t cp = 0x4E00; cp < 0x4E00 + 118; cp += 2)
    lex_words.push_back(Utf8Encode({cp, cp + 1}));
  Lexicon lexicon(lex_words);

  Rng rng(0xACCE55);
  std::size_t violations = 0, samples = 0;
  for (std::size_t s = 0; s < 10000; ++s) {
    std::string text;
    std::size_t parts = 3 + rng.next_below(8);
    for (std::size_t p = 0; p < parts; ++p) {
      if (rng.next_below(4) == 0) {
        std::string w = ascii_heads[rng.next_below(ascii_heads.size())] +
                        ascii_tails[rng.next_below(ascii_tails.size())]
                            .substr(2);
        text += " " + w + " ";
      } else {
        std::uint32_t cp = 0x4E00 + 2 * rng.next_below(59);
        text += Utf8Encode({cp, cp + 1});
      }
    }
    auto toks = Tokenize(text, vocab);
    if (toks.empty()) continue;
    auto spans = SegmentWords(toks, lexicon);
    MaskedSample ms =
        GenerateWwmSample(toks, spans, vocab, 0.15, 0xBEEF + s);
    ++samples;
    for (const WordSpan& sp : spans) {
      bool first = ms.labels[sp.start] != kIgnoreLabel;
      for (std::size_t i = sp.start; i < sp.end; ++i)
        if ((ms.labels[i] != kIgnoreLabel) != first) ++violations;
    }
  }
  if (samples < 10000 || violations != 0) {
    ok = false;
    detail += "atomicity violations=" + std::to_string(violations) +
              " over " + std::to_string(samples) + " samples; ";
  }

  // the published segmentation example sentence
  std::vector<std::string> demo_toks = {"使", "用", "语", "言", "模", "型",
                                        "来", "预", "测", "下", "一", "个",
                                        "词", "的", "pro", "##babi", "##lity",
                                        "。"};
  std::vector<std::string> demo_vocab = {"[PAD]", "[UNK]", "[CLS]", "[SEP]",
                                         "[MASK]", "pro", "##babi", "##lity"};
  for (const auto& t : demo_toks)
    if (static_cast<unsigned char>(t[0]) >= 0x80)
      demo_vocab.push_back(t);  // the CJK singles
  Vocab dv(demo_vocab);
  Lexicon dl({"使用", "语言", "模型", "预测", "下一个"});
  auto spans = SegmentWords(demo_toks, dl);
  // locate the three words of interest by their token ranges
  const WordSpan lang{2, 4}, pred{7, 9}, prob{14, 17};
  bool spans_found = false;
  std::size_t found = 0;
  for (const WordSpan& sp : spans)
    if (sp == lang || sp == pred || sp == prob) ++found;
  spans_found = found == 3;
  if (!spans_found) {
    ok = false;
    detail += "demo sentence segmentation missed a published word; ";
  }
  std::size_t selected_checks = 0;
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    MaskedSample ms = GenerateWwmSample(demo_toks, spans, dv, 0.15, seed);
    for (const WordSpan& sp : {lang, pred, prob}) {
      if (ms.labels[sp.start] == kIgnoreLabel) continue;
      ++selected_checks;
      for (std::size_t i = sp.start; i < sp.end; ++i)
        if (ms.labels[i] == kIgnoreLabel) {
          ok = false;
          detail += "published word split at seed " + std::to_string(seed) +
                    "; ";
        }
    }
  }
  if (selected_checks == 0) {
    ok = false;
    detail += "published words never selected across 2000 seeds; ";
  }
  g.Report(3, ok, detail);
}

// ---------------------------------------------------------------------------
// 4: hand-derived loss values and finite-difference gradients

void Criterion4(Gate& g) {
  bool ok = true;
  std::string detail;

  {  // hidden loss hand example = 10, exactly
    Tape t;
    DistillConfig cfg;
    cfg.layer_map.pairs = {{1, 1}};
    cfg.projections.emplace_back("w", Tensor::Matrix(2, 2, {1, 0, 0, 1}));
    Var dummy = t.leaf(Tensor::Row({0, 0}));
    Var hs = t.leaf(Tensor::Row({1, 0}), true);
    Var loss =
        HiddenLoss(t, {dummy, hs}, {Tensor(), Tensor::Row({3, 4})}, cfg, {1});
    if (t.value(loss).data[0] != 10.0) {
      ok = false;
      detail += "hidden_loss example != 10; ";
    }
  }
  {  // prediction loss uniform case = ln 2 within 1e-12
    Tape t;
    Var s = t.leaf(Tensor::Row({0, 0}), true);
    double v =
        t.value(PredictionLoss(t, s, Tensor::Row({0, 0}), 1.0, {1})).data[0];
    if (std::fabs(v - std::log(2.0)) > 1e-12) {
      ok = false;
      detail += "prediction_loss uniform != ln 2; ";
    }
  }
  {  // Gibbs bound over 1000 random logit pairs
    Rng rng(404);
    for (std::size_t i = 0; i < 1000; ++i) {
      Tensor zs = testutil::RandomTensor({1, 8}, rng, 2.0);
      Tensor zt = testutil::RandomTensor({1, 8}, rng, 2.0);
      double temp = 1.0 + rng.next_double() * 8.0;
      Tape t;
      double loss =
          t.value(PredictionLoss(t, t.leaf(zs, true), zt, temp, {1})).data[0];
      Tape t2;
      double ent =
          t2.value(PredictionLoss(t2, t2.leaf(zt, true), zt, temp, {1}))
              .data[0];
      if (loss < ent - 1e-10) {
        ok = false;
        detail += "Gibbs bound violated; ";
        break;
      }
    }
  }
  {  // gradient checks: losses and a full network
    Rng rng(405);
    Tensor teacher_state = testutil::RandomTensor({3, 4}, rng);
    double err = testutil::MaxGradError(
        [&](Tape& t, const std::vector<Var>& v) {
          Var proj = t.matmul(v[0], v[1]);
          return t.mse_rows(proj, teacher_state, {1, 1, 0});
        },
        {testutil::RandomTensor({3, 2}, rng),
         testutil::RandomTensor({2, 4}, rng)});
    Tensor zt = testutil::RandomTensor({3, 5}, rng, 2.0);
    err = std::max(err, testutil::MaxGradError(
                            [&](Tape& t, const std::vector<Var>& v) {
                              return PredictionLoss(t, v[0], zt, 8.0,
                                                    {1, 0, 1});
                            },
                            {testutil::RandomTensor({3, 5}, rng, 2.0)}));
    if (err >= 1e-4) {
      ok = false;
      detail += "loss gradient FD error " + std::to_string(err) + "; ";
    }

    // network: tiny encoder, MLM loss, probe every parameter tensor
    ModelConfig c{1, 8, 16, 2, 12, 8, 2};
    EncoderModel m = EncoderModel::Init(c, 11);
    Vocab v({"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "a", "b", "c", "d",
             "e", "f", "g"});
    MaskedSample s1{{5, 6, 7}, {kIgnoreLabel, 6, 7}, 3};
    Batch batch = BuildBatch({s1}, v, 6);
    auto loss_fn = [&]() {
      ForwardResult fr = EncoderForward::NoGrad(m, batch, true, false, false);
      double total = 0.0;
      std::size_t count = 0;
      for (std::size_t r = 0; r < batch.labels.size(); ++r) {
        if (batch.labels[r] < 0) continue;
        double mx = -1e300, z = 0.0;
        for (std::size_t k = 0; k < c.vocab_size; ++k)
          mx = std::max(mx, fr.logits.data[r * c.vocab_size + k]);
        for (std::size_t k = 0; k < c.vocab_size; ++k)
          z += std::exp(fr.logits.data[r * c.vocab_size + k] - mx);
        total += mx + std::log(z) -
                 fr.logits.data[r * c.vocab_size +
                                static_cast<std::size_t>(batch.labels[r])];
        ++count;
      }
      return total / static_cast<double>(count);
    };
    m.zero_grads();
    Tape tape;
    ForwardGraph fg = EncoderForward::OnTape(m, tape, batch, true, false);
    tape.backward(tape.cross_entropy_rows(fg.logits, batch.labels));
    double worst = 0.0;
    const double step = 1e-5;
    for (Parameter* p : m.trainable_parameters()) {
      std::size_t n = p->value.data.size();
      for (std::size_t pick = 0; pick < 2; ++pick) {
        std::size_t j = (pick * 5471 + 1) % n;
        double keep = p->value.data[j];
        p->value.data[j] = keep + step;
        double up = loss_fn();
        p->value.data[j] = keep - step;
        double dn = loss_fn();
        p->value.data[j] = keep;
        double fd = (up - dn) / (2 * step);
        double a = p->grad.data[j];
        double denom = std::max({std::fabs(a), std::fabs(fd), 1e-4});
        worst = std::max(worst, std::fabs(a - fd) / denom);
      }
    }
    if (worst >= 1e-4) {
      ok = false;
      detail += "network gradient FD error " + std::to_string(worst) + "; ";
    }
  }
  g.Report(4, ok, detail);
}

// ---------------------------------------------------------------------------
// 5/6/7: the desk-scale pipeline and everything hanging off it

struct PipelineArtifacts {
  fs::path dir;
  TrainPlan teacher_plan, two_plan, one_plan;
  PipelineReport teacher_report, two_report, one_report;
  bool ran = false;
  double seconds = 0.0;
};

TrainPlan BasePlan(const PipelineArtifacts& a) {
  TrainPlan p;
  p.corpus = (a.dir / "corpus.txt").string();
  p.vocab = (a.dir / "vocab.txt").string();
  p.lexicon = (a.dir / "lexicon.txt").string();
  p.batch_size = 8;
  p.max_len = 24;
  p.seed = 1234;
  // tiny models want a hotter peak than the published large-scale value
  p.peak_lr = 2e-3;
  return p;
}

PipelineArtifacts RunDeskPipeline() {
  PipelineArtifacts a;
  a.dir = fs::temp_directory_path() / "minirbt_acceptance";
  fs::remove_all(a.dir);
  fs::create_directories(a.dir);

  testutil::ChainLanguage lang;
  testutil::WriteLines((a.dir / "corpus.txt").string(), lang.Corpus(80));
  testutil::WriteLines((a.dir / "vocab.txt").string(), lang.VocabTokens());
  testutil::WriteLines((a.dir / "lexicon.txt").string(), lang.LexiconWords());

  auto t0 = std::chrono::steady_clock::now();

  a.teacher_plan = BasePlan(a);
  a.teacher_plan.mode = "teacher_mlm";
  a.teacher_plan.teacher_config = "desk-teacher";
  a.teacher_plan.out_dir = (a.dir / "teacher").string();
  a.teacher_plan.steps = 1000;
  a.teacher_report = TrainMlm(a.teacher_plan);

  a.two_plan = BasePlan(a);
  a.two_plan.mode = "two_stage";
  a.two_plan.teacher_config = "desk-teacher";
  a.two_plan.assistant_config = "desk-assistant";
  a.two_plan.student_config = "desk-student";
  a.two_plan.teacher_ckpt = a.teacher_plan.out_dir + "/teacher.ckpt";
  a.two_plan.out_dir = (a.dir / "two").string();
  a.two_plan.stage1_steps = 1000;
  a.two_plan.stage2_steps = 1000;
  a.two_report = TwoStagePipeline(a.two_plan);

  a.one_plan = a.two_plan;
  a.one_plan.mode = "one_stage";
  a.one_plan.out_dir = (a.dir / "one").string();
  a.one_report = OneStagePipeline(a.one_plan);

  a.seconds = Ms(t0) / 1000.0;
  a.ran = true;
  return a;
}

void Criterion5(Gate& g, const PipelineArtifacts& a) {
  if (!a.ran) {
    g.Report(5, false, "pipeline did not run");
    return;
  }
  bool ok = true;
  std::string detail;
  char buf[256];

  std::size_t total_steps = a.two_plan.stage1_steps + a.two_plan.stage2_steps;
  if (total_steps > 2000) {
    ok = false;
    detail += "step budget above 2000; ";
  }
  if (a.seconds >= 600.0) {
    ok = false;
    std::snprintf(buf, sizeof(buf), "runtime %.1f s >= 600 s; ", a.seconds);
    detail += buf;
  }
  for (const StageReport& s : a.two_report.stages) {
    double dec = s.window_decrease();
    if (dec < 0.30) {
      ok = false;
      std::snprintf(buf, sizeof(buf), "%s window decrease %.1f%% < 30%%; ",
                    s.name.c_str(), 100.0 * dec);
      detail += buf;
    }
  }
  double baseline = a.two_report.random_baseline;
  if (a.two_report.heldout_mlm_accuracy <= 5.0 * baseline) {
    ok = false;
    std::snprintf(buf, sizeof(buf),
                  "heldout acc %.4f <= 5x baseline %.4f; ",
                  a.two_report.heldout_mlm_accuracy, 5.0 * baseline);
    detail += buf;
  }
  // one-stage baseline completed under the identical budget, and the
  // side-by-side report can be produced
  if (a.one_report.stages.empty() ||
      a.one_report.stages[0].metrics.size() != a.two_plan.stage2_steps) {
    ok = false;
    detail += "one-stage baseline incomplete; ";
  }
  try {
    PipelineComparison cmp = ComparePipelines(a.two_report, a.one_report);
    std::ofstream((a.dir / "comparison.txt").string()) << cmp.ToText();
  } catch (const std::exception& e) {
    ok = false;
    detail += std::string("comparison failed: ") + e.what() + "; ";
  }
  if (ok) {
    std::snprintf(buf, sizeof(buf),
                  "%.0f s, stage decreases %.0f%%/%.0f%%, heldout %.3f vs "
                  "baseline %.4f",
                  a.seconds, 100.0 * a.two_report.stages[0].window_decrease(),
                  100.0 * a.two_report.stages[1].window_decrease(),
                  a.two_report.heldout_mlm_accuracy, baseline);
    detail = buf;
  }
  g.Report(5, ok, detail);
}

void Criterion6(Gate& g, const PipelineArtifacts& a) {
  bool ok = true;
  std::string detail;

  // re-run a shortened two-stage pipeline twice: first 10 steps bitwise
  TrainPlan p = a.two_plan;
  p.stage1_steps = 12;
  p.stage2_steps = 12;
  p.out_dir = (a.dir / "det_a").string();
  PipelineReport r1 = TwoStagePipeline(p);
  p.out_dir = (a.dir / "det_b").string();
  PipelineReport r2 = TwoStagePipeline(p);
  for (std::size_t s = 0; s < 2 && ok; ++s)
    for (std::size_t i = 0; i < 10; ++i)
      if (r1.stages[s].metrics[i].l_total != r2.stages[s].metrics[i].l_total ||
          r1.stages[s].metrics[i].l_layer != r2.stages[s].metrics[i].l_layer ||
          r1.stages[s].metrics[i].l_pred != r2.stages[s].metrics[i].l_pred) {
        ok = false;
        detail += "metric logs differ at step " + std::to_string(i) + "; ";
        break;
      }

  // teacher-training determinism too
  TrainPlan t1 = a.teacher_plan;
  t1.steps = 12;
  t1.out_dir = (a.dir / "det_t1").string();
  TrainPlan t2 = t1;
  t2.out_dir = (a.dir / "det_t2").string();
  PipelineReport tr1 = TrainMlm(t1), tr2 = TrainMlm(t2);
  for (std::size_t i = 0; i < 10; ++i)
    if (tr1.stages[0].metrics[i].l_total != tr2.stages[0].metrics[i].l_total) {
      ok = false;
      detail += "teacher logs differ; ";
      break;
    }

  // checkpoint-resume: loss at the step after resume equals the
  // uninterrupted run's, bitwise
  TrainPlan full = a.teacher_plan;
  full.steps = 16;
  full.out_dir = (a.dir / "det_full").string();
  PipelineReport rf = TrainMlm(full);
  TrainPlan part = full;
  part.out_dir = (a.dir / "det_part").string();
  part.ckpt_every = 8;
  TrainMlm(part);
  TrainPlan resumed = full;
  resumed.out_dir = (a.dir / "det_resumed").string();
  PipelineReport rr = TrainMlm(resumed, part.out_dir + "/teacher_train_8.ckpt");
  if (rr.stages[0].metrics.empty() ||
      rr.stages[0].metrics[0].step != 8 ||
      rr.stages[0].metrics[0].l_total != rf.stages[0].metrics[8].l_total) {
    ok = false;
    detail += "resume next-step loss mismatch; ";
  }
  g.Report(6, ok, detail);
}

void Criterion7(Gate& g, const PipelineArtifacts& a) {
  if (!a.ran) {
    g.Report(7, false, "pipeline did not run");
    return;
  }
  testutil::ChainLanguage lang;
  Vocab vocab(lang.VocabTokens());
  TaskDataset ds = TaskDataset::FromExamples(lang.ToyTask(200, 77));
  double oracle = testutil::BagOfTokensOracleAccuracy(ds, vocab);

  bool ok = oracle == 1.0;
  std::string detail = ok ? "" : "oracle below 1.0; ";
  char buf[128];
  // every distilled desk-scale student: two-stage and one-stage outputs
  const std::pair<const char*, std::string> students[] = {
      {"two-stage", a.two_plan.out_dir + "/student.ckpt"},
      {"one-stage", a.one_plan.out_dir + "/student_one_stage.ckpt"},
  };
  for (const auto& [name, ckpt] : students) {
    double mean =
        FineTuneMeanAccuracy(ckpt, vocab, ds, 5, 2e-3, {1, 2, 3}, 8, 16);
    std::snprintf(buf, sizeof(buf), "%s mean acc %.3f; ", name, mean);
    detail += buf;
    if (mean <= 0.9) ok = false;
  }
  g.Report(7, ok, detail);
}

}  // namespace

int main() {
  Gate g;
  try {
    Criterion1(g);
    Criterion2(g);
    Criterion3(g);
    Criterion4(g);
    PipelineArtifacts a = RunDeskPipeline();
    Criterion5(g, a);
    Criterion6(g, a);
    Criterion7(g, a);
    fs::remove_all(a.dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance aborted: %s\n", e.what());
    return 2;
  }
  return g.failures == 0 ? 0 : 1;
}
