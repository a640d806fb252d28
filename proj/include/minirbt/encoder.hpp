// minirbt/encoder.hpp

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

#ifndef MINIRBT_ENCODER_HPP_
#define MINIRBT_ENCODER_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "minirbt/tape.hpp"
#include "minirbt/tensor.hpp"
#include "minirbt/tokenizer.hpp"

namespace minirbt {

constexpr double kLayerNormEps = 1e-12;

/// One row of the model-structure table.
struct ModelConfig {
  std::size_t layers = 0;
  std::size_t hidden = 0;
  std::size_t ffn = 0;
  std::size_t heads = 0;
  std::size_t vocab_size = 21128;
  std::size_t max_positions = 512;
  std::size_t type_vocab = 2;

  void Validate() const;
  bool operator==(const ModelConfig&) const = default;

  static ModelConfig Preset(const std::string& name);
  static ModelConfig FromFile(const std::string& path);  // key=value lines
  static const std::vector<std::string>& PresetNames();
  static const std::vector<std::string>& PublishedPresetNames();
};

struct ParamCount {
  std::size_t total = 0;
  std::size_t embedding = 0;
  std::size_t non_embedding = 0;
};

// Closed-form parameter accounting; pooler counted as non-embedding, MLM
// head excluded.
ParamCount CountParameters(const ModelConfig& c);

// 2*(multiply-add) count of all encoder matmuls for one sequence of length
// seq_len; embeddings, MLM head and pooler excluded.
double EstimateFlops(const ModelConfig& c, std::size_t seq_len);

struct LayerParams {
  Parameter wq, bq, wk, bk, wv, bv, wo, bo;
  Parameter ln1_g, ln1_b;
  Parameter w1, b1, w2, b2;
  Parameter ln2_g, ln2_b;
};

/// MLM prediction head; the decoder matrix is the token embedding (tied,
/// single storage), so only the transform and output bias live here.
struct MlmHead {
  Parameter dense_w, dense_b;
  Parameter ln_g, ln_b;
  Parameter out_bias;
};

class EncoderModel {
 public:
  // truncated-normal(0.02) weights, zero biases, unit layer-norm gains
  static EncoderModel Init(const ModelConfig& config, std::uint64_t rng_seed);

  const ModelConfig& config() const { return config_; }

  // encoder + pooler parameters (the inventory CountParameters describes)
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  // MLM head parameters (excluded from the published size accounting)
  std::vector<Parameter*> head_parameters();
  // everything trained during MLM / distillation
  std::vector<Parameter*> trainable_parameters();

  void zero_grads();

  Parameter& token_embedding() { return tok_emb_; }
  const Parameter& token_embedding() const { return tok_emb_; }
  MlmHead& mlm_head() { return head_; }

  void Save(const std::string& path) const;
  static EncoderModel Load(const std::string& path);

  // FNV-1a over the raw parameter bytes; used to verify teacher freezing
  std::uint64_t ParameterHash() const;

  friend struct EncoderForward;

 private:
  explicit EncoderModel(const ModelConfig& c);

  ModelConfig config_;
  Parameter tok_emb_, pos_emb_, type_emb_, emb_ln_g_, emb_ln_b_;
  std::vector<LayerParams> layers_;
  Parameter pooler_w_, pooler_b_;
  MlmHead head_;
};

/// Differentiable forward pass recorded on a tape.
struct ForwardGraph {
  std::vector<Var> hidden_states;  // layers+1 entries, [B*S x h]; 0 = embedding
  Var logits;                      // [B*S x vocab] (if requested)
  Var pooled;                      // [B x h] (if requested)
  std::vector<std::uint8_t> nonpad_rows;  // row mask over B*S
};

/// Inference-only forward pass; same kernels, no graph retained.
struct ForwardResult {
  std::vector<Tensor> hidden_states;
  Tensor logits;
  Tensor pooled;
  std::vector<std::uint8_t> nonpad_rows;
};

struct EncoderForward {
  static ForwardGraph OnTape(EncoderModel& m, Tape& tape, const Batch& batch,
                             bool want_logits = true, bool want_pooled = false);
  static ForwardResult NoGrad(const EncoderModel& m, const Batch& batch,
                              bool want_logits = true, bool want_pooled = false,
                              bool keep_hidden = true);
};

}  // namespace minirbt

#endif  // MINIRBT_ENCODER_HPP_
