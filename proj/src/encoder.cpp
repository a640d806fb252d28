// minirbt/encoder.cpp

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

#include "minirbt/encoder.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "minirbt/checkpoint.hpp"
#include "minirbt/rng.hpp"

namespace minirbt {

// ---------------------------------------------------------------------------
// ModelConfig

void ModelConfig::Validate() const {
  if (layers == 0 || hidden == 0 || ffn == 0 || heads == 0 ||
      vocab_size == 0 || max_positions == 0 || type_vocab == 0)
    throw std::invalid_argument("ModelConfig: all fields must be positive");
  if (hidden % heads != 0)
    throw std::invalid_argument(
        "ModelConfig: hidden (" + std::to_string(hidden) +
        ") not divisible by heads (" + std::to_string(heads) + ")");
}

namespace {

const std::map<std::string, ModelConfig>& PresetTable() {
  static const std::map<std::string, ModelConfig> table = {
      {"roberta-wwm", {12, 768, 3072, 12}},
      {"rbt6", {6, 768, 3072, 12}},
      {"rbt3", {3, 768, 3072, 12}},
      {"rbt4-h312", {4, 312, 1200, 12}},
      {"minirbt-h256", {6, 256, 1024, 8}},
      {"minirbt-h288", {6, 288, 1152, 8}},
      // desk-scale family: runs in minutes on one core
      {"desk-teacher", {4, 64, 256, 4, 512, 64}},
      {"desk-assistant", {4, 48, 192, 4, 512, 64}},
      {"desk-student", {2, 32, 128, 4, 512, 64}},
  };
  return table;
}

}  // namespace

ModelConfig ModelConfig::Preset(const std::string& name) {
  auto it = PresetTable().find(name);
  if (it == PresetTable().end())
    throw std::invalid_argument("unknown model preset '" + name + "'");
  return it->second;
}

const std::vector<std::string>& ModelConfig::PresetNames() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [k, _] : PresetTable()) v.push_back(k);
    return v;
  }();
  return names;
}

const std::vector<std::string>& ModelConfig::PublishedPresetNames() {
  static const std::vector<std::string> names = {
      "roberta-wwm", "rbt6", "rbt3", "rbt4-h312", "minirbt-h256",
      "minirbt-h288"};
  return names;
}

ModelConfig ModelConfig::FromFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ModelConfig: cannot open " + path);
  ModelConfig c;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("ModelConfig: bad line '" + line + "'");
    std::string key = line.substr(0, eq);
    std::size_t val = std::stoull(line.substr(eq + 1));
    if (key == "layers") c.layers = val;
    else if (key == "hidden") c.hidden = val;
    else if (key == "ffn") c.ffn = val;
    else if (key == "heads") c.heads = val;
    else if (key == "vocab_size") c.vocab_size = val;
    else if (key == "max_positions") c.max_positions = val;
    else if (key == "type_vocab") c.type_vocab = val;
    else throw std::runtime_error("ModelConfig: unknown key '" + key + "'");
  }
  c.Validate();
  return c;
}

ParamCount CountParameters(const ModelConfig& c) {
  std::size_t h = c.hidden, f = c.ffn;
  std::size_t per_layer = 4 * (h * h + h)   // QKVO projections
                          + 2 * h * f + f + h  // FFN
                          + 4 * h;             // two layer norms
  ParamCount p;
  p.non_embedding = c.layers * per_layer + (h * h + h);  // + pooler
  p.embedding = c.vocab_size * h + c.max_positions * h + c.type_vocab * h +
                2 * h;  // tables + embedding layer norm
  p.total = p.non_embedding + p.embedding;
  return p;
}

double EstimateFlops(const ModelConfig& c, std::size_t seq_len) {
  double s = static_cast<double>(seq_len);
  double h = static_cast<double>(c.hidden);
  double f = static_cast<double>(c.ffn);
  double per_layer = 8.0 * s * h * h      // Q,K,V,O projections
                     + 4.0 * s * s * h    // scores + context
                     + 4.0 * s * h * f;   // FFN in + out
  return static_cast<double>(c.layers) * per_layer;
}

// ---------------------------------------------------------------------------
// EncoderModel

EncoderModel::EncoderModel(const ModelConfig& c) : config_(c) {
  c.Validate();
  std::size_t h = c.hidden, f = c.ffn;
  tok_emb_ = Parameter("embeddings.word", Tensor({c.vocab_size, h}));
  pos_emb_ = Parameter("embeddings.position", Tensor({c.max_positions, h}));
  type_emb_ = Parameter("embeddings.type", Tensor({c.type_vocab, h}));
  emb_ln_g_ = Parameter("embeddings.ln_gain", Tensor({h}));
  emb_ln_b_ = Parameter("embeddings.ln_bias", Tensor({h}));
  layers_.resize(c.layers);
  for (std::size_t l = 0; l < c.layers; ++l) {
    std::string p = "layer." + std::to_string(l) + ".";
    LayerParams& L = layers_[l];
    L.wq = Parameter(p + "attn.wq", Tensor({h, h}));
    L.bq = Parameter(p + "attn.bq", Tensor({h}));
    L.wk = Parameter(p + "attn.wk", Tensor({h, h}));
    L.bk = Parameter(p + "attn.bk", Tensor({h}));
    L.wv = Parameter(p + "attn.wv", Tensor({h, h}));
    L.bv = Parameter(p + "attn.bv", Tensor({h}));
    L.wo = Parameter(p + "attn.wo", Tensor({h, h}));
    L.bo = Parameter(p + "attn.bo", Tensor({h}));
    L.ln1_g = Parameter(p + "ln1.gain", Tensor({h}));
    L.ln1_b = Parameter(p + "ln1.bias", Tensor({h}));
    L.w1 = Parameter(p + "ffn.w1", Tensor({h, f}));
    L.b1 = Parameter(p + "ffn.b1", Tensor({f}));
    L.w2 = Parameter(p + "ffn.w2", Tensor({f, h}));
    L.b2 = Parameter(p + "ffn.b2", Tensor({h}));
    L.ln2_g = Parameter(p + "ln2.gain", Tensor({h}));
    L.ln2_b = Parameter(p + "ln2.bias", Tensor({h}));
  }
  pooler_w_ = Parameter("pooler.w", Tensor({h, h}));
  pooler_b_ = Parameter("pooler.b", Tensor({h}));
  head_.dense_w = Parameter("mlm.dense_w", Tensor({h, h}));
  head_.dense_b = Parameter("mlm.dense_b", Tensor({h}));
  head_.ln_g = Parameter("mlm.ln_gain", Tensor({h}));
  head_.ln_b = Parameter("mlm.ln_bias", Tensor({h}));
  head_.out_bias = Parameter("mlm.out_bias", Tensor({c.vocab_size}));
}

EncoderModel EncoderModel::Init(const ModelConfig& config,
                                std::uint64_t rng_seed) {
  EncoderModel m(config);
  Rng rng(rng_seed);
  auto fill_normal = [&](Parameter& p) {
    for (double& v : p.value.data) v = rng.next_trunc_normal(0.02);
  };
  auto fill_ones = [&](Parameter& p) {
    std::fill(p.value.data.begin(), p.value.data.end(), 1.0);
  };
  fill_normal(m.tok_emb_);
  fill_normal(m.pos_emb_);
  fill_normal(m.type_emb_);
  fill_ones(m.emb_ln_g_);
  for (LayerParams& L : m.layers_) {
    fill_normal(L.wq);
    fill_normal(L.wk);
    fill_normal(L.wv);
    fill_normal(L.wo);
    fill_ones(L.ln1_g);
    fill_normal(L.w1);
    fill_normal(L.w2);
    fill_ones(L.ln2_g);
  }
  fill_normal(m.pooler_w_);
  fill_normal(m.head_.dense_w);
  fill_ones(m.head_.ln_g);
  return m;
}

std::vector<Parameter*> EncoderModel::parameters() {
  std::vector<Parameter*> ps = {&tok_emb_, &pos_emb_, &type_emb_, &emb_ln_g_,
                                &emb_ln_b_};
  for (LayerParams& L : layers_) {
    for (Parameter* p : {&L.wq, &L.bq, &L.wk, &L.bk, &L.wv, &L.bv, &L.wo,
                         &L.bo, &L.ln1_g, &L.ln1_b, &L.w1, &L.b1, &L.w2, &L.b2,
                         &L.ln2_g, &L.ln2_b})
      ps.push_back(p);
  }
  ps.push_back(&pooler_w_);
  ps.push_back(&pooler_b_);
  return ps;
}

std::vector<const Parameter*> EncoderModel::parameters() const {
  auto ps = const_cast<EncoderModel*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

std::vector<Parameter*> EncoderModel::head_parameters() {
  return {&head_.dense_w, &head_.dense_b, &head_.ln_g, &head_.ln_b,
          &head_.out_bias};
}

std::vector<Parameter*> EncoderModel::trainable_parameters() {
  auto ps = parameters();
  for (Parameter* p : head_parameters()) ps.push_back(p);
  return ps;
}

void EncoderModel::zero_grads() {
  for (Parameter* p : trainable_parameters()) p->zero_grad();
}

void EncoderModel::Save(const std::string& path) const {
  Container c;
  c.meta = {{"kind", "encoder"},
            {"layers", std::to_string(config_.layers)},
            {"hidden", std::to_string(config_.hidden)},
            {"ffn", std::to_string(config_.ffn)},
            {"heads", std::to_string(config_.heads)},
            {"vocab_size", std::to_string(config_.vocab_size)},
            {"max_positions", std::to_string(config_.max_positions)},
            {"type_vocab", std::to_string(config_.type_vocab)}};
  auto* self = const_cast<EncoderModel*>(this);
  for (Parameter* p : self->trainable_parameters())
    c.tensors.emplace_back(p->name, p->value);
  SaveContainer(path, c);
}

EncoderModel EncoderModel::Load(const std::string& path) {
  Container c = LoadContainer(path);
  auto get = [&](const char* key) -> std::size_t {
    const std::string* v = c.find_meta(key);
    if (!v) throw std::runtime_error("checkpoint: missing meta " +
                                     std::string(key));
    return std::stoull(*v);
  };
  ModelConfig cfg;
  cfg.layers = get("layers");
  cfg.hidden = get("hidden");
  cfg.ffn = get("ffn");
  cfg.heads = get("heads");
  cfg.vocab_size = get("vocab_size");
  cfg.max_positions = get("max_positions");
  cfg.type_vocab = get("type_vocab");
  EncoderModel m(cfg);
  for (Parameter* p : m.trainable_parameters()) {
    const Tensor* t = c.find_tensor(p->name);
    if (!t) throw std::runtime_error("checkpoint: missing tensor " + p->name);
    if (t->shape != p->value.shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + p->name);
    p->value = *t;
  }
  return m;
}

std::uint64_t EncoderModel::ParameterHash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto* self = const_cast<EncoderModel*>(this);
  for (Parameter* p : self->trainable_parameters()) {
    const unsigned char* bytes =
        reinterpret_cast<const unsigned char*>(p->value.data.data());
    for (std::size_t i = 0; i < p->value.data.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Forward passes

namespace {

void CheckBatch(const ModelConfig& cfg, const Batch& batch) {
  if (batch.batch == 0) throw std::invalid_argument("forward: empty batch");
  if (batch.max_len > cfg.max_positions)
    throw std::invalid_argument("forward: sequence length " +
                                std::to_string(batch.max_len) +
                                " exceeds max_positions " +
                                std::to_string(cfg.max_positions));
  for (std::int64_t id : batch.input_ids)
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size)
      throw std::invalid_argument("forward: token id " + std::to_string(id) +
                                  " outside vocab of size " +
                                  std::to_string(cfg.vocab_size));
  for (std::size_t len : batch.lengths)
    if (len == 0 || len > batch.max_len)
      throw std::invalid_argument("forward: invalid sequence length");
}

std::vector<std::uint8_t> NonPadRows(const Batch& batch) {
  std::vector<std::uint8_t> mask(batch.batch * batch.max_len, 0);
  for (std::size_t b = 0; b < batch.batch; ++b)
    for (std::size_t p = 0; p < batch.lengths[b]; ++p)
      mask[b * batch.max_len + p] = 1;
  return mask;
}

}  // namespace

ForwardGraph EncoderForward::OnTape(EncoderModel& m, Tape& tape,
                                    const Batch& batch, bool want_logits,
                                    bool want_pooled) {
  const ModelConfig& cfg = m.config_;
  CheckBatch(cfg, batch);
  std::size_t B = batch.batch, S = batch.max_len, h = cfg.hidden;
  std::size_t heads = cfg.heads, dh = h / heads;
  double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<std::size_t> tok_ids(batch.input_ids.begin(),
                                   batch.input_ids.end());
  std::vector<std::size_t> pos_ids(B * S), type_ids(B * S, 0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t p = 0; p < S; ++p) pos_ids[b * S + p] = p;

  Var emb_table = tape.param(m.tok_emb_);
  Var tok = tape.gather_rows(emb_table, tok_ids);
  Var pos = tape.gather_rows(tape.param(m.pos_emb_), pos_ids);
  Var typ = tape.gather_rows(tape.param(m.type_emb_), type_ids);
  Var x = tape.layer_norm(tape.add(tape.add(tok, pos), typ),
                          tape.param(m.emb_ln_g_), tape.param(m.emb_ln_b_),
                          kLayerNormEps);

  ForwardGraph out;
  out.nonpad_rows = NonPadRows(batch);
  out.hidden_states.push_back(x);

  for (LayerParams& L : m.layers_) {
    Var q = tape.add_rows(tape.matmul(x, tape.param(L.wq)), tape.param(L.bq));
    Var k = tape.add_rows(tape.matmul(x, tape.param(L.wk)), tape.param(L.bk));
    Var v = tape.add_rows(tape.matmul(x, tape.param(L.wv)), tape.param(L.bv));
    std::vector<Var> batch_ctx;
    for (std::size_t b = 0; b < B; ++b) {
      std::vector<Var> head_ctx;
      for (std::size_t hd = 0; hd < heads; ++hd) {
        Var qs = tape.slice(q, b * S, S, hd * dh, dh);
        Var ks = tape.slice(k, b * S, S, hd * dh, dh);
        Var vs = tape.slice(v, b * S, S, hd * dh, dh);
        Var scores = tape.scale(tape.matmul_nt(qs, ks), inv_sqrt_dh);
        Var probs = tape.softmax_rows(scores, 1.0, batch.lengths[b]);
        head_ctx.push_back(tape.matmul(probs, vs));
      }
      batch_ctx.push_back(tape.concat_cols(head_ctx));
    }
    Var ctx = tape.concat_rows(batch_ctx);
    Var attn_out =
        tape.add_rows(tape.matmul(ctx, tape.param(L.wo)), tape.param(L.bo));
    x = tape.layer_norm(tape.add(x, attn_out), tape.param(L.ln1_g),
                        tape.param(L.ln1_b), kLayerNormEps);
    Var ffn = tape.add_rows(
        tape.matmul(tape.gelu(tape.add_rows(tape.matmul(x, tape.param(L.w1)),
                                            tape.param(L.b1))),
                    tape.param(L.w2)),
        tape.param(L.b2));
    x = tape.layer_norm(tape.add(x, ffn), tape.param(L.ln2_g),
                        tape.param(L.ln2_b), kLayerNormEps);
    out.hidden_states.push_back(x);
  }

  if (want_logits) {
    MlmHead& H = m.head_;
    Var t = tape.layer_norm(
        tape.gelu(tape.add_rows(tape.matmul(x, tape.param(H.dense_w)),
                                tape.param(H.dense_b))),
        tape.param(H.ln_g), tape.param(H.ln_b), kLayerNormEps);
    out.logits =
        tape.add_rows(tape.matmul_nt(t, emb_table), tape.param(H.out_bias));
  }
  if (want_pooled) {
    std::vector<std::size_t> cls_rows(B);
    for (std::size_t b = 0; b < B; ++b) cls_rows[b] = b * S;
    Var cls = tape.select_rows(x, cls_rows);
    out.pooled = tape.tanh_act(tape.add_rows(
        tape.matmul(cls, tape.param(m.pooler_w_)), tape.param(m.pooler_b_)));
  }
  return out;
}

ForwardResult EncoderForward::NoGrad(const EncoderModel& m, const Batch& batch,
                                     bool want_logits, bool want_pooled,
                                     bool keep_hidden) {
  using namespace kernels;
  const ModelConfig& cfg = m.config_;
  CheckBatch(cfg, batch);
  std::size_t B = batch.batch, S = batch.max_len, h = cfg.hidden;
  std::size_t heads = cfg.heads, dh = h / heads;
  double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor tok({B * S, h}), pos({B * S, h}), typ({B * S, h});
  const Tensor& E = m.tok_emb_.value;
  for (std::size_t i = 0; i < B * S; ++i) {
    std::size_t id = static_cast<std::size_t>(batch.input_ids[i]);
    std::copy(E.data.begin() + id * h, E.data.begin() + (id + 1) * h,
              tok.data.begin() + i * h);
    std::size_t p = i % S;
    std::copy(m.pos_emb_.value.data.begin() + p * h,
              m.pos_emb_.value.data.begin() + (p + 1) * h,
              pos.data.begin() + i * h);
    std::copy(m.type_emb_.value.data.begin(),
              m.type_emb_.value.data.begin() + h, typ.data.begin() + i * h);
  }
  Tensor x = LayerNorm(Add(Add(tok, pos), typ), m.emb_ln_g_.value,
                       m.emb_ln_b_.value, kLayerNormEps);
  tok.data.clear();
  pos.data.clear();
  typ.data.clear();

  ForwardResult out;
  out.nonpad_rows = NonPadRows(batch);
  if (keep_hidden) out.hidden_states.push_back(x);

  auto slice2d = [](const Tensor& a, std::size_t r0, std::size_t nr,
                    std::size_t c0, std::size_t nc) {
    Tensor s({nr, nc});
    std::size_t w = a.shape[1];
    for (std::size_t r = 0; r < nr; ++r)
      std::copy(a.data.begin() + (r0 + r) * w + c0,
                a.data.begin() + (r0 + r) * w + c0 + nc,
                s.data.begin() + r * nc);
    return s;
  };

  for (const LayerParams& L : m.layers_) {
    Tensor q = AddRows(Matmul(x, L.wq.value), L.bq.value);
    Tensor k = AddRows(Matmul(x, L.wk.value), L.bk.value);
    Tensor v = AddRows(Matmul(x, L.wv.value), L.bv.value);
    Tensor ctx({B * S, h});
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t hd = 0; hd < heads; ++hd) {
        Tensor qs = slice2d(q, b * S, S, hd * dh, dh);
        Tensor ks = slice2d(k, b * S, S, hd * dh, dh);
        Tensor vs = slice2d(v, b * S, S, hd * dh, dh);
        Tensor scores = MatmulNT(qs, ks);
        for (double& sv : scores.data) sv *= inv_sqrt_dh;
        Tensor probs = SoftmaxRows(scores, 1.0, batch.lengths[b]);
        Tensor hc = Matmul(probs, vs);
        for (std::size_t r = 0; r < S; ++r)
          std::copy(hc.data.begin() + r * dh, hc.data.begin() + (r + 1) * dh,
                    ctx.data.begin() + (b * S + r) * h + hd * dh);
      }
    }
    Tensor attn_out = AddRows(Matmul(ctx, L.wo.value), L.bo.value);
    x = LayerNorm(Add(x, attn_out), L.ln1_g.value, L.ln1_b.value,
                  kLayerNormEps);
    Tensor ffn = AddRows(
        Matmul(Gelu(AddRows(Matmul(x, L.w1.value), L.b1.value)), L.w2.value),
        L.b2.value);
    x = LayerNorm(Add(x, ffn), L.ln2_g.value, L.ln2_b.value, kLayerNormEps);
    if (keep_hidden) out.hidden_states.push_back(x);
  }

  if (want_logits) {
    const MlmHead& H = m.head_;
    Tensor t = LayerNorm(
        Gelu(AddRows(Matmul(x, H.dense_w.value), H.dense_b.value)),
        H.ln_g.value, H.ln_b.value, kLayerNormEps);
    out.logits = AddRows(MatmulNT(t, E), H.out_bias.value);
  }
  if (want_pooled) {
    Tensor cls({B, h});
    for (std::size_t b = 0; b < B; ++b)
      std::copy(x.data.begin() + b * S * h, x.data.begin() + (b * S + 1) * h,
                cls.data.begin() + b * h);
    out.pooled =
        Tanh(AddRows(Matmul(cls, m.pooler_w_.value), m.pooler_b_.value));
  }
  return out;
}

}  // namespace minirbt
