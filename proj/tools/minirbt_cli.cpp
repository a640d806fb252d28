// tools/minirbt_cli.cpp

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

// Single binary tying the pipeline together:
//   pretrain-teacher  MLM pre-training of a (desk-scale) teacher
//   distill           one- or two-stage distillation per the plan
//   finetune          classification fine-tuning from a checkpoint
//   bench             inference benchmark over model configs
//   inspect           parameter/FLOPs table for configs
//   make-samples      dump masked samples for a sentence, for audit
// Exit codes: 0 success, 1 validation/usage error, 2 runtime failure.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "minirbt/eval.hpp"
#include "minirbt/rng.hpp"

using namespace minirbt;

namespace {

// every flag override lands in the plan through the same Set() the plan
// file uses, so file values and flags cannot drift apart
struct PlanArgs {
  std::string plan_file;
  std::vector<std::pair<std::string, std::string>> overrides;

  TrainPlan Resolve(const std::string& forced_mode) const {
    TrainPlan p = plan_file.empty() ? TrainPlan() : TrainPlan::FromFile(plan_file);
    if (!forced_mode.empty()) p.mode = forced_mode;
    for (const auto& [k, v] : overrides) p.Set(k, v);
    if (const char* env = std::getenv("MINIRBT_OUT")) {
      bool out_overridden = false;
      for (const auto& [k, v] : overrides)
        if (k == "out_dir") out_overridden = true;
      if (p.out_dir == "." && !out_overridden) p.out_dir = env;
    }
    try {
      p.Validate();
    } catch (const std::exception& e) {
      throw std::invalid_argument(e.what());
    }
    return p;
  }
};

void AddPlanFlags(CLI::App* cmd, PlanArgs* args) {
  cmd->add_option("--plan", args->plan_file, "run-plan file (key=value lines)");
  auto keep = [args](const std::string& key) {
    return [args, key](const std::string& v) {
      args->overrides.emplace_back(key, v);
    };
  };
  cmd->add_option_function<std::string>("--seed", keep("seed"), "RNG seed");
  cmd->add_option_function<std::string>("--out", keep("out_dir"),
                                        "output directory");
  cmd->add_option_function<std::string>("--corpus", keep("corpus"),
                                        "corpus file, one sentence per line");
  cmd->add_option_function<std::string>("--vocab", keep("vocab"),
                                        "vocab file, one token per line");
  cmd->add_option_function<std::string>("--lexicon", keep("lexicon"),
                                        "word lexicon for segmentation");
  cmd->add_option_function<std::string>("--steps", keep("steps"),
                                        "teacher training steps");
  cmd->add_option_function<std::string>("--stage1-steps", keep("stage1_steps"),
                                        "teacher->assistant steps");
  cmd->add_option_function<std::string>("--stage2-steps", keep("stage2_steps"),
                                        "->student steps");
  cmd->add_option_function<std::string>("--batch-size", keep("batch_size"),
                                        "sequences per step");
  cmd->add_option_function<std::string>("--max-len", keep("max_len"),
                                        "sequence length incl. [CLS]/[SEP]");
  cmd->add_option_function<std::string>("--strategy", keep("strategy"),
                                        "masking strategy: wwm | char");
  cmd->add_option_function<std::string>("--temperature", keep("temperature"),
                                        "distillation temperature");
  cmd->add_option_function<std::string>("--mask-rate", keep("mask_rate"),
                                        "fraction of tokens to select");
  cmd->add_option_function<std::string>("--peak-lr", keep("peak_lr"),
                                        "schedule peak learning rate");
  cmd->add_option_function<std::string>("--teacher-config",
                                        keep("teacher_config"),
                                        "teacher preset or config file");
  cmd->add_option_function<std::string>("--assistant-config",
                                        keep("assistant_config"),
                                        "assistant preset or config file");
  cmd->add_option_function<std::string>("--student-config",
                                        keep("student_config"),
                                        "student preset or config file");
  cmd->add_option_function<std::string>("--teacher-ckpt", keep("teacher_ckpt"),
                                        "frozen teacher checkpoint");
  cmd->add_option_function<std::string>("--ckpt-every", keep("ckpt_every"),
                                        "training-checkpoint cadence");
}

void PrintStageSummary(const PipelineReport& r) {
  for (const StageReport& s : r.stages)
    std::printf("%-12s steps=%-5zu first-window=%-10.4f last-window=%-10.4f "
                "decrease=%.1f%%\n",
                s.name.c_str(), s.metrics.size(), s.first_window_mean,
                s.last_window_mean, 100.0 * s.window_decrease());
  if (r.heldout_mlm_accuracy >= 0.0)
    std::printf("heldout masked-token accuracy %.4f (random baseline %.4f)\n",
                r.heldout_mlm_accuracy, r.random_baseline);
}

// ---------------------------------------------------------------------------

int CmdInspect(const std::string& preset, const std::string& config_file,
               std::size_t seq_len) {
  std::vector<std::pair<std::string, ModelConfig>> rows;
  if (!config_file.empty()) {
    rows.emplace_back(config_file, ModelConfig::FromFile(config_file));
  } else if (preset == "all") {
    for (const std::string& name : ModelConfig::PublishedPresetNames())
      rows.emplace_back(name, ModelConfig::Preset(name));
  } else if (preset == "all-desk") {
    for (const std::string& name : ModelConfig::PresetNames())
      rows.emplace_back(name, ModelConfig::Preset(name));
  } else {
    rows.emplace_back(preset, ModelConfig::Preset(preset));
  }

  double ref_flops = rows.empty() ? 0.0 : EstimateFlops(rows[0].second, seq_len);
  std::printf("# model structures and cost at seq %zu\n", seq_len);
  std::printf("%-14s %6s %6s %6s %5s %10s %10s %10s %8s\n", "name", "layers",
              "hidden", "ffn", "heads", "params", "non-emb", "flops",
              "speedup");
  for (const auto& [name, cfg] : rows) {
    ParamCount pc = CountParameters(cfg);
    double flops = EstimateFlops(cfg, seq_len);
    std::printf("%-14s %6zu %6zu %6zu %5zu %9.1fM %9.1fM %10.3g %7.1fx\n",
                name.c_str(), cfg.layers, cfg.hidden, cfg.ffn, cfg.heads,
                pc.total / 1e6, pc.non_embedding / 1e6, flops,
                ref_flops / flops);
  }
  return 0;
}

int CmdMakeSamples(const std::string& text, const std::string& strategy,
                   std::uint64_t seed, std::size_t count, double mask_rate,
                   const std::string& vocab_file,
                   const std::string& lexicon_file) {
  // built-in fallback vocabulary/lexicon covering the usual demo sentence
  Vocab vocab = [&] {
    if (!vocab_file.empty()) return Vocab::FromFile(vocab_file);
    std::vector<std::string> toks = {"[PAD]", "[UNK]", "[CLS]", "[SEP]",
                                     "[MASK]", "pro", "##babi", "##lity"};
    std::set<std::string> seen(toks.begin(), toks.end());
    for (std::uint32_t cp : Utf8Decode(text)) {
      if (cp < 0x80) continue;
      std::string s = Utf8Encode({cp});
      if (seen.insert(s).second) toks.push_back(s);
    }
    return Vocab(std::move(toks));
  }();
  Lexicon lexicon = lexicon_file.empty()
                        ? Lexicon({"使用", "语言", "模型", "预测", "下一个"})
                        : Lexicon::FromFile(lexicon_file);

  auto tokens = Tokenize(text, vocab);
  if (tokens.empty()) throw std::invalid_argument("make-samples: empty text");
  auto spans = SegmentWords(tokens, lexicon);

  std::printf("tokens      :");
  for (const auto& t : tokens) std::printf(" %s", t.c_str());
  std::printf("\nsegmentation:");
  for (const WordSpan& sp : spans) {
    std::printf(" [");
    for (std::size_t i = sp.start; i < sp.end; ++i)
      std::printf("%s%s", i > sp.start ? " " : "", tokens[i].c_str());
    std::printf("]");
  }
  std::printf("\n");

  for (std::size_t n = 0; n < count; ++n) {
    std::uint64_t s = DeriveSeed(seed, 0x53414d50, n);
    MaskedSample ms = strategy == "char"
                          ? GenerateCharMaskSample(tokens, vocab, mask_rate, s)
                          : GenerateWwmSample(tokens, spans, vocab, mask_rate,
                                              s);
    std::printf("%s #%zu    :", strategy.c_str(), n);
    for (std::size_t i = 0; i < ms.input_ids.size(); ++i)
      std::printf(" %s", vocab.token(ms.input_ids[i]).c_str());
    std::printf("\nlabels      :");
    for (std::size_t i = 0; i < ms.labels.size(); ++i)
      std::printf(" %s", ms.labels[i] == kIgnoreLabel
                             ? "-"
                             : vocab.token(ms.labels[i]).c_str());
    std::printf("\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"minirbt: desk-scale whole-word-masking distillation pipeline"};
  app.require_subcommand(1);

  // pretrain-teacher -------------------------------------------------------
  PlanArgs pretrain_args;
  std::string pretrain_resume;
  CLI::App* pretrain =
      app.add_subcommand("pretrain-teacher", "MLM pre-training of a teacher");
  AddPlanFlags(pretrain, &pretrain_args);
  pretrain->add_option("--resume", pretrain_resume,
                       "training checkpoint to resume from");

  // distill ----------------------------------------------------------------
  PlanArgs distill_args;
  std::string distill_mode;
  CLI::App* distill =
      app.add_subcommand("distill", "one- or two-stage distillation");
  AddPlanFlags(distill, &distill_args);
  distill->add_option("--mode", distill_mode,
                      "one_stage | two_stage (else from the plan)");

  // finetune ---------------------------------------------------------------
  std::string ft_ckpt, ft_task, ft_vocab;
  std::size_t ft_epochs = 5, ft_batch = 8, ft_max_len = 32;
  double ft_lr = 2e-3;
  std::vector<std::uint64_t> ft_seeds = {1, 2, 3};
  CLI::App* finetune =
      app.add_subcommand("finetune", "classification fine-tuning");
  finetune->add_option("--ckpt", ft_ckpt, "encoder checkpoint")->required();
  finetune->add_option("--task", ft_task, "tsv task file: label<TAB>text")
      ->required();
  finetune->add_option("--vocab", ft_vocab, "vocab file")->required();
  finetune->add_option("--epochs", ft_epochs, "training epochs");
  finetune->add_option("--lr", ft_lr, "constant learning rate");
  finetune->add_option("--seeds", ft_seeds, "seeds to average over");
  finetune->add_option("--batch-size", ft_batch, "examples per step");
  finetune->add_option("--max-len", ft_max_len, "sequence length");

  // bench ------------------------------------------------------------------
  std::vector<std::string> bench_presets;
  std::string bench_out;
  std::size_t bench_seq = 512, bench_batch = 8, bench_trials = 30,
              bench_warmup = 5;
  CLI::App* bench = app.add_subcommand("bench", "inference benchmark");
  bench->add_option("--preset", bench_presets,
                    "configs to compare; first is the reference "
                    "(default: the published set)");
  bench->add_option("--seq", bench_seq, "sequence length");
  bench->add_option("--batch", bench_batch, "batch size");
  bench->add_option("--trials", bench_trials, "timed trials per config");
  bench->add_option("--warmup", bench_warmup, "warmup runs per config");
  bench->add_option("--out", bench_out, "also save the report to this file");

  // inspect ----------------------------------------------------------------
  std::string inspect_preset = "all", inspect_config;
  std::size_t inspect_seq = 512;
  CLI::App* inspect =
      app.add_subcommand("inspect", "parameter and FLOPs table");
  inspect->add_option("--preset", inspect_preset,
                      "preset name, 'all' (published set) or 'all-desk'");
  inspect->add_option("--config", inspect_config, "config file instead");
  inspect->add_option("--seq", inspect_seq, "sequence length for FLOPs");

  // make-samples -----------------------------------------------------------
  std::string ms_text, ms_strategy = "wwm", ms_vocab, ms_lexicon;
  std::uint64_t ms_seed = 0;
  std::size_t ms_count = 1;
  double ms_rate = 0.15;
  CLI::App* make_samples =
      app.add_subcommand("make-samples", "dump masked samples for audit");
  make_samples->add_option("--text", ms_text, "sentence to mask")->required();
  make_samples->add_option("--strategy", ms_strategy, "wwm | char");
  make_samples->add_option("--seed", ms_seed, "RNG seed");
  make_samples->add_option("--count", ms_count, "samples to draw");
  make_samples->add_option("--mask-rate", ms_rate, "selection fraction");
  make_samples->add_option("--vocab", ms_vocab,
                           "vocab file (default: built from the text)");
  make_samples->add_option("--lexicon", ms_lexicon,
                           "lexicon file (default: built-in demo words)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // usage problems (incl. a missing subcommand) are validation errors
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (pretrain->parsed()) {
      TrainPlan plan = pretrain_args.Resolve("teacher_mlm");
      PipelineReport r = TrainMlm(plan, pretrain_resume);
      PrintStageSummary(r);
      std::printf("wrote %s/teacher.ckpt\n", plan.out_dir.c_str());
    } else if (distill->parsed()) {
      TrainPlan plan = distill_args.Resolve(distill_mode);
      PipelineReport r = plan.mode == "two_stage" ? TwoStagePipeline(plan)
                                                  : OneStagePipeline(plan);
      PrintStageSummary(r);
    } else if (finetune->parsed()) {
      Vocab vocab = Vocab::FromFile(ft_vocab);
      TaskDataset ds = TaskDataset::FromFile(ft_task);
      double mean = FineTuneMeanAccuracy(ft_ckpt, vocab, ds, ft_epochs, ft_lr,
                                         ft_seeds, ft_batch, ft_max_len);
      std::printf("mean dev accuracy over %zu seeds: %.4f\n", ft_seeds.size(),
                  mean);
    } else if (bench->parsed()) {
      if (bench_presets.empty())
        bench_presets = ModelConfig::PublishedPresetNames();
      std::vector<std::pair<std::string, ModelConfig>> configs;
      for (const std::string& name : bench_presets)
        configs.emplace_back(name, ModelConfig::Preset(name));
      BenchReport r = BenchmarkInference(configs, bench_seq, bench_batch,
                                         bench_trials, bench_warmup);
      r.Print(std::cout);
      if (!bench_out.empty()) r.Save(bench_out);
    } else if (inspect->parsed()) {
      return CmdInspect(inspect_preset, inspect_config, inspect_seq);
    } else if (make_samples->parsed()) {
      return CmdMakeSamples(ms_text, ms_strategy, ms_seed, ms_count, ms_rate,
                            ms_vocab, ms_lexicon);
    }
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
