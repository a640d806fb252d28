// minirbt/optimizer.hpp

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

#ifndef MINIRBT_OPTIMIZER_HPP_
#define MINIRBT_OPTIMIZER_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "minirbt/checkpoint.hpp"
#include "minirbt/tensor.hpp"

namespace minirbt {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-6;
  double weight_decay = 0.01;
};

/// AdamW with decoupled weight decay and bias-corrected moments.
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWConfig cfg = {});

  // applies one update from the accumulated p->grad values; throws on a
  // non-finite gradient, naming the step
  void Step(double lr);

  std::size_t step_count() const { return step_; }

  // moments and step count, for resumable checkpoints
  void ExportState(Container* c) const;
  void ImportState(const Container& c);

 private:
  std::vector<Parameter*> params_;
  AdamWConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::size_t step_ = 0;
};

// scales all gradients so the global L2 norm is at most max_norm; returns
// the pre-clip norm
double ClipGradNorm(const std::vector<Parameter*>& params, double max_norm);

/// Piecewise-linear schedule: (0,0) -> (warmup, peak) -> (total, 0).
struct Schedule {
  double peak = 4e-4;
  double warmup_frac = 0.1;
  std::size_t total_steps = 0;

  // learning rate applied at step (0-based step index, evaluated before
  // the update)
  double lr(std::size_t step) const;
  std::size_t warmup_steps() const;
};

}  // namespace minirbt

#endif  // MINIRBT_OPTIMIZER_HPP_
