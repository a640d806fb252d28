// minirbt/distill.cpp

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

#include "minirbt/distill.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "minirbt/rng.hpp"

namespace minirbt {

void LayerMap::Validate(std::size_t student_layers,
                        std::size_t teacher_layers) const {
  if (pairs.empty()) throw std::invalid_argument("LayerMap: empty map");
  std::size_t last_s = 0, last_t = 0;
  for (const auto& [s, t] : pairs) {
    if (s == 0 || t == 0)
      throw std::invalid_argument("LayerMap: indices are 1-based");
    if (s <= last_s || t <= last_t)
      throw std::invalid_argument("LayerMap: indices must strictly increase");
    if (s > student_layers || t > teacher_layers)
      throw std::invalid_argument(
          "LayerMap: pair (" + std::to_string(s) + "," + std::to_string(t) +
          ") out of range for " + std::to_string(student_layers) + "/" +
          std::to_string(teacher_layers) + " layers");
    last_s = s;
    last_t = t;
  }
}

LayerMap UniformLayerMap(std::size_t student_layers,
                         std::size_t teacher_layers) {
  if (student_layers == 0 || teacher_layers == 0)
    throw std::invalid_argument("uniform_layer_map: zero layer count");
  if (teacher_layers % student_layers != 0)
    throw std::invalid_argument(
        "uniform_layer_map: teacher layers (" + std::to_string(teacher_layers) +
        ") not divisible by student layers (" + std::to_string(student_layers) +
        "); supply a manual layer map");
  std::size_t k = teacher_layers / student_layers;
  LayerMap m;
  for (std::size_t i = 1; i <= student_layers; ++i)
    m.pairs.emplace_back(i, i * k);
  return m;
}

void DistillConfig::InitProjections(std::size_t student_hidden,
                                    std::size_t teacher_hidden,
                                    std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  projections.clear();
  for (std::size_t i = 0; i < layer_map.pairs.size(); ++i) {
    Parameter p("distill.proj." + std::to_string(i),
                Tensor({student_hidden, teacher_hidden}));
    for (double& v : p.value.data) v = rng.next_trunc_normal(0.02);
    projections.push_back(std::move(p));
  }
}

Var HiddenLoss(Tape& tape, const std::vector<Var>& student_states,
               const std::vector<Tensor>& teacher_states, DistillConfig& cfg,
               const std::vector<std::uint8_t>& nonpad_rows) {
  const auto& pairs = cfg.layer_map.pairs;
  if (pairs.empty())
    throw std::invalid_argument("hidden_loss: empty layer map");
  if (cfg.projections.size() != pairs.size())
    throw std::invalid_argument("hidden_loss: one projection per mapped pair "
                                "required");
  Var total;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto [si, ti] = pairs[i];
    if (si >= student_states.size() || ti >= teacher_states.size())
      throw std::invalid_argument("hidden_loss: layer map index out of range");
    Var hs = student_states[si];
    const Tensor& ht = teacher_states[ti];
    const Tensor& pv = cfg.projections[i].value;
    if (tape.value(hs).shape[1] != pv.shape[0] || pv.shape[1] != ht.shape[1])
      throw std::invalid_argument(
          "hidden_loss: projection shape " + pv.shape_string() +
          " incompatible with states " + tape.value(hs).shape_string() +
          " / " + ht.shape_string());
    Var proj = tape.matmul(hs, tape.param(cfg.projections[i]));
    Var pair_loss = tape.mse_rows(proj, ht, nonpad_rows);
    total = total.valid() ? tape.add(total, pair_loss) : pair_loss;
  }
  return total;
}

Var PredictionLoss(Tape& tape, Var student_logits, const Tensor& teacher_logits,
                   double temperature,
                   const std::vector<std::uint8_t>& row_mask) {
  return tape.soft_cross_entropy_rows(student_logits, teacher_logits,
                                      temperature, row_mask);
}

Var TotalDistillLoss(Tape& tape, Var hidden_loss, Var pred_loss,
                     double hidden_weight, double pred_weight) {
  double h = tape.value(hidden_loss).data[0];
  double p = tape.value(pred_loss).data[0];
  if (!std::isfinite(h) || !std::isfinite(p))
    throw std::runtime_error("total_distill_loss: non-finite component (" +
                             std::to_string(h) + ", " + std::to_string(p) +
                             ")");
  return tape.add(tape.scale(hidden_loss, hidden_weight),
                  tape.scale(pred_loss, pred_weight));
}

}  // namespace minirbt
