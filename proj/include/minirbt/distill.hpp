// minirbt/distill.hpp

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

#ifndef MINIRBT_DISTILL_HPP_
#define MINIRBT_DISTILL_HPP_

#include <cstdint>
#include <utility>
#include <vector>

#include "minirbt/tape.hpp"
#include "minirbt/tensor.hpp"

namespace minirbt {

/// Ordered (student layer, teacher layer) pairs. Indices are 1-based over
/// transformer layer outputs and index the hidden_states list directly
/// (entry 0 is the embedding output, which is never mapped by default).
struct LayerMap {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;

  void Validate(std::size_t student_layers, std::size_t teacher_layers) const;
};

// stride k = teacher/student, pairs (i, i*k); errors when teacher layer
// count is not divisible by the student's
LayerMap UniformLayerMap(std::size_t student_layers,
                         std::size_t teacher_layers);

struct DistillConfig {
  double temperature = 8.0;
  LayerMap layer_map;
  // one trainable student_hidden x teacher_hidden projection per mapped pair
  std::vector<Parameter> projections;
  double hidden_weight = 1.0;
  double pred_weight = 1.0;
  // false: distill logits only at masked (labeled) positions
  bool pred_all_positions = false;

  void InitProjections(std::size_t student_hidden, std::size_t teacher_hidden,
                       std::uint64_t rng_seed);
};

// Sum over mapped pairs of MSE(student_state * W_h, teacher_state), mean
// per pair over non-pad rows and all hidden dims. Teacher states are
// constants; gradients flow to student states and projections.
Var HiddenLoss(Tape& tape, const std::vector<Var>& student_states,
               const std::vector<Tensor>& teacher_states, DistillConfig& cfg,
               const std::vector<std::uint8_t>& nonpad_rows);

// Temperature-scaled soft-label cross entropy, mean over contributing rows.
Var PredictionLoss(Tape& tape, Var student_logits, const Tensor& teacher_logits,
                   double temperature,
                   const std::vector<std::uint8_t>& row_mask);

// weighted sum of the two components (default 1,1)
Var TotalDistillLoss(Tape& tape, Var hidden_loss, Var pred_loss,
                     double hidden_weight = 1.0, double pred_weight = 1.0);

}  // namespace minirbt

#endif  // MINIRBT_DISTILL_HPP_
