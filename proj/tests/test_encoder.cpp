// tests/test_encoder.cpp

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "testutil.hpp"

using namespace minirbt;

namespace {

ModelConfig TinyConfig() {
  ModelConfig c;
  c.layers = 1;
  c.hidden = 8;
  c.ffn = 16;
  c.heads = 2;
  c.vocab_size = 12;
  c.max_positions = 8;
  return c;
}

Batch TinyBatch(std::size_t max_len = 6) {
  // two rows with different real lengths; ids stay below vocab_size
  MaskedSample s1{{5, 6, 7}, {kIgnoreLabel, 6, kIgnoreLabel}, 3};
  MaskedSample s2{{8, 9}, {8, kIgnoreLabel}, 2};
  Vocab v({"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "a", "b", "c", "d",
           "e", "f", "g"});
  return BuildBatch({s1, s2}, v, max_len);
}

}  // namespace

TEST_CASE("config validation and presets") {
  CHECK_THROWS(ModelConfig{}.Validate());
  ModelConfig bad = TinyConfig();
  bad.heads = 3;  // hidden not divisible by heads
  CHECK_THROWS(bad.Validate());
  CHECK_THROWS(ModelConfig::Preset("no-such-model"));

  ModelConfig teacher = ModelConfig::Preset("roberta-wwm");
  CHECK(teacher.layers == 12);
  CHECK(teacher.hidden == 768);
  CHECK(teacher.ffn == 3072);
  ModelConfig h256 = ModelConfig::Preset("minirbt-h256");
  CHECK(h256.layers == 6);
  CHECK(h256.hidden == 256);
  CHECK(h256.ffn == 1024);
  CHECK(h256.heads == 8);
}

TEST_CASE("config file round trip") {
  std::string path = "/tmp/minirbt_cfg.txt";
  {
    std::ofstream f(path);
    f << "# comment\nlayers=2\nhidden=32\nffn=128\nheads=4\n"
         "vocab_size=100\nmax_positions=64\n";
  }
  ModelConfig c = ModelConfig::FromFile(path);
  CHECK(c.layers == 2);
  CHECK(c.hidden == 32);
  CHECK(c.ffn == 128);
  CHECK(c.vocab_size == 100);
  CHECK(c.max_positions == 64);
  CHECK(c.type_vocab == 2);  // default kept
}

TEST_CASE("parameter counts match the published table within 1%") {
  struct Row {
    const char* preset;
    double total_m, non_emb_m;  // published, in millions
  };
  const Row rows[] = {
      {"roberta-wwm", 102.3, 85.7}, {"rbt6", 59.8, 43.1},
      {"rbt3", 38.5, 21.9},         {"rbt4-h312", 11.4, 4.7},
      {"minirbt-h256", 10.4, 4.8},  {"minirbt-h288", 12.3, 6.1},
  };
  for (const Row& r : rows) {
    ParamCount pc = CountParameters(ModelConfig::Preset(r.preset));
    CAPTURE(r.preset);
    CHECK(std::fabs(pc.total / 1e6 - r.total_m) / r.total_m < 0.01);
    CHECK(std::fabs(pc.non_embedding / 1e6 - r.non_emb_m) / r.non_emb_m < 0.01);
    CHECK(pc.total == pc.embedding + pc.non_embedding);
  }
}

TEST_CASE("closed-form count equals exhaustive parameter walk") {
  for (const char* name :
       {"desk-teacher", "desk-assistant", "desk-student", "rbt4-h312"}) {
    ModelConfig c = ModelConfig::Preset(name);
    EncoderModel m = EncoderModel::Init(c, 1);
    std::size_t walked = 0;
    for (const Parameter* p : std::as_const(m).parameters())
      walked += p->value.data.size();
    CAPTURE(name);
    CHECK(walked == CountParameters(c).total);
  }
}

TEST_CASE("degenerate config counted by hand") {
  // layers=1 hidden=2 ffn=4 heads=1 vocab=3 max_pos=5 type=2
  ModelConfig c{1, 2, 4, 1, 3, 5, 2};
  // embedding: 3*2 + 5*2 + 2*2 + 2 + 2 = 24
  // layer: qkv/o 4*(4+2)=24; ln1 4; ffn 2*4+4 + 4*2+2 = 22; ln2 4 -> 54
  // pooler: 4 + 2 = 6
  ParamCount pc = CountParameters(c);
  CHECK(pc.embedding == 24);
  CHECK(pc.non_embedding == 60);
  CHECK(pc.total == 84);
}

TEST_CASE("flops closed form and published speedup ratios") {
  // hand case: layers=1, hidden=1, ffn=1, s=2 -> 8*2*1 + 4*4*1 + 4*2*1 = 40
  ModelConfig c{1, 1, 1, 1, 3, 5, 2};
  CHECK(EstimateFlops(c, 2) == 40.0);

  double teacher = EstimateFlops(ModelConfig::Preset("roberta-wwm"), 512);
  CHECK(teacher / EstimateFlops(ModelConfig::Preset("rbt6"), 512) ==
        doctest::Approx(2.0).epsilon(1e-12));
  CHECK(teacher / EstimateFlops(ModelConfig::Preset("rbt3"), 512) ==
        doctest::Approx(4.0).epsilon(1e-12));
  double r256 = teacher / EstimateFlops(ModelConfig::Preset("minirbt-h256"), 512);
  double r288 = teacher / EstimateFlops(ModelConfig::Preset("minirbt-h288"), 512);
  double r312 = teacher / EstimateFlops(ModelConfig::Preset("rbt4-h312"), 512);
  // the small models are markedly cheaper and ordered as published
  CHECK(r256 >= 6.8);
  CHECK(r256 > r288);
  CHECK(r312 > r256);
  CHECK(r288 > 4.0);
}

TEST_CASE("init determinism") {
  ModelConfig c = TinyConfig();
  EncoderModel a = EncoderModel::Init(c, 7);
  EncoderModel b = EncoderModel::Init(c, 7);
  EncoderModel d = EncoderModel::Init(c, 8);
  CHECK(a.ParameterHash() == b.ParameterHash());
  CHECK(a.ParameterHash() != d.ParameterHash());
  // weights are truncated at 2 sigma, biases zero, gains one
  for (const Parameter* p : std::as_const(a).parameters()) {
    for (double v : p->value.data) CHECK(std::fabs(v) <= 0.04 + 1.0);
  }
}

TEST_CASE("forward shape contract") {
  EncoderModel m = EncoderModel::Init(TinyConfig(), 3);
  Batch b = TinyBatch();
  Tape tape;
  ForwardGraph fg = EncoderForward::OnTape(m, tape, b, true, true);
  REQUIRE(fg.hidden_states.size() == m.config().layers + 1);
  for (Var h : fg.hidden_states) {
    CHECK(tape.value(h).shape[0] == b.batch * b.max_len);
    CHECK(tape.value(h).shape[1] == m.config().hidden);
  }
  CHECK(tape.value(fg.logits).shape ==
        std::vector<std::size_t>{b.batch * b.max_len, m.config().vocab_size});
  CHECK(tape.value(fg.pooled).shape ==
        std::vector<std::size_t>{b.batch, m.config().hidden});
  REQUIRE(fg.nonpad_rows.size() == b.batch * b.max_len);
  // row mask mirrors lengths
  for (std::size_t i = 0; i < b.batch; ++i)
    for (std::size_t j = 0; j < b.max_len; ++j)
      CHECK(fg.nonpad_rows[i * b.max_len + j] ==
            (j < b.lengths[i] ? 1 : 0));
}

TEST_CASE("pad region cannot influence real positions") {
  EncoderModel m = EncoderModel::Init(TinyConfig(), 3);
  Batch b = TinyBatch();
  ForwardResult clean = EncoderForward::NoGrad(m, b);
  Batch dirty = b;
  // scribble different token ids into the pad region
  for (std::size_t i = 0; i < b.batch; ++i)
    for (std::size_t j = b.lengths[i]; j < b.max_len; ++j)
      dirty.input_ids[i * b.max_len + j] = 9;
  ForwardResult scribbled = EncoderForward::NoGrad(m, dirty);
  std::size_t V = m.config().vocab_size;
  for (std::size_t r = 0; r < b.batch * b.max_len; ++r) {
    if (!clean.nonpad_rows[r]) continue;
    for (std::size_t k = 0; k < V; ++k)
      CHECK(clean.logits.data[r * V + k] == scribbled.logits.data[r * V + k]);
  }
}

TEST_CASE("tape forward and inference forward agree bitwise") {
  EncoderModel m = EncoderModel::Init(TinyConfig(), 5);
  Batch b = TinyBatch();
  Tape tape;
  ForwardGraph fg = EncoderForward::OnTape(m, tape, b, true, true);
  ForwardResult fr = EncoderForward::NoGrad(m, b, true, true, true);
  REQUIRE(fr.hidden_states.size() == fg.hidden_states.size());
  for (std::size_t l = 0; l < fr.hidden_states.size(); ++l)
    CHECK(tape.value(fg.hidden_states[l]).data == fr.hidden_states[l].data);
  CHECK(tape.value(fg.logits).data == fr.logits.data);
  CHECK(tape.value(fg.pooled).data == fr.pooled.data);
}

TEST_CASE("end-to-end gradients match finite differences") {
  EncoderModel m = EncoderModel::Init(TinyConfig(), 11);
  Batch b = TinyBatch(5);
  std::vector<std::int64_t> labels = b.labels;

  auto loss_fn = [&]() {
    ForwardResult fr = EncoderForward::NoGrad(m, b, true, false, false);
    // same reduction the MLM objective uses
    double total = 0.0;
    std::size_t count = 0;
    std::size_t V = m.config().vocab_size;
    for (std::size_t r = 0; r < labels.size(); ++r) {
      if (labels[r] < 0) continue;
      double mx = fr.logits.data[r * V];
      for (std::size_t k = 1; k < V; ++k)
        mx = std::max(mx, fr.logits.data[r * V + k]);
      double z = 0.0;
      for (std::size_t k = 0; k < V; ++k)
        z += std::exp(fr.logits.data[r * V + k] - mx);
      total += mx + std::log(z) -
               fr.logits.data[r * V + static_cast<std::size_t>(labels[r])];
      ++count;
    }
    return total / static_cast<double>(count);
  };

  m.zero_grads();
  Tape tape;
  ForwardGraph fg = EncoderForward::OnTape(m, tape, b, true, false);
  Var loss = tape.cross_entropy_rows(fg.logits, labels);
  tape.backward(loss);
  CHECK(tape.value(loss).data[0] == doctest::Approx(loss_fn()).epsilon(1e-12));

  // probe a deterministic sample of entries in every trainable tensor
  const double step = 1e-5;
  double worst = 0.0;
  for (Parameter* p : m.trainable_parameters()) {
    std::size_t n = p->value.data.size();
    for (std::size_t pick = 0; pick < 3; ++pick) {
      std::size_t j = (pick * 7919 + 13) % n;
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
  CHECK(worst < 1e-4);
}

TEST_CASE("checkpoint round trip is exact") {
  EncoderModel m = EncoderModel::Init(TinyConfig(), 21);
  std::string path = "/tmp/minirbt_enc_rt.ckpt";
  m.Save(path);
  EncoderModel m2 = EncoderModel::Load(path);
  CHECK(m2.config() == m.config());
  CHECK(m2.ParameterHash() == m.ParameterHash());
  // a second save writes identical bytes
  std::string path2 = "/tmp/minirbt_enc_rt2.ckpt";
  m2.Save(path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), {});
  std::string b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);
  CHECK(!b1.empty());
  std::remove(path.c_str());
  std::remove(path2.c_str());
}
