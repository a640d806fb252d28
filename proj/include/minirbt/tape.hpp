// minirbt/tape.hpp

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

#ifndef MINIRBT_TAPE_HPP_
#define MINIRBT_TAPE_HPP_

#include <cstdint>
#include <functional>
#include <vector>

#include "minirbt/kernels.hpp"
#include "minirbt/tensor.hpp"

namespace minirbt {

struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode autodiff tape. Nodes are appended in execution order
/// (so inputs always precede consumers) and backward replays the exact
/// reverse order. Fan-out accumulates additively into node gradients;
/// gradients of bound Parameters are added to their external accumulators
/// at the end of each backward() call.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // --- graph inputs ------------------------------------------------------
  Var leaf(Tensor value, bool requires_grad = false);
  Var param(Parameter& p);  // leaf whose gradient flows into p.grad

  // --- primitives --------------------------------------------------------
  Var matmul(Var a, Var b);          // [m x k] * [k x n]
  Var matmul_nt(Var a, Var b);       // [m x k] * [n x k]^T
  Var add(Var a, Var b);
  Var add_rows(Var a, Var bias);     // broadcast bias over rows
  Var mul(Var a, Var b);             // elementwise
  Var scale(Var a, double c);
  Var gelu(Var a);
  Var tanh_act(Var a);
  Var layer_norm(Var x, Var gain, Var bias, double eps);
  // softmax(x / temperature) over the first valid_cols of each row;
  // columns past valid_cols come out exact zero (attention padding mask)
  Var softmax_rows(Var a, double temperature, std::size_t valid_cols);
  Var softmax_rows(Var a, double temperature);
  Var gather_rows(Var table, std::vector<std::size_t> ids);
  Var select_rows(Var a, std::vector<std::size_t> rows);
  Var slice(Var a, std::size_t r0, std::size_t nr, std::size_t c0,
            std::size_t nc);
  Var concat_cols(const std::vector<Var>& parts);
  Var concat_rows(const std::vector<Var>& parts);
  Var sum(Var a);  // scalar

  // --- fused losses ------------------------------------------------------
  // mean over (selected rows x width) of squared difference to a constant
  // target; the workhorse of hidden-state distillation
  Var mse_rows(Var a, const Tensor& target, const std::vector<std::uint8_t>& row_mask);
  // mean over labeled rows of -log softmax(logits)[label]; label < 0 means
  // the row does not contribute
  Var cross_entropy_rows(Var logits, const std::vector<std::int64_t>& labels);
  // mean over selected rows of -sum_k softmax(t_row/temp)_k *
  // log softmax(s_row/temp)_k; the teacher side is a constant
  Var soft_cross_entropy_rows(Var student_logits, const Tensor& teacher_logits,
                              double temperature,
                              const std::vector<std::uint8_t>& row_mask);

  // --- execution ---------------------------------------------------------
  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. loss must be
  // scalar. Node gradients are reset first; Parameter accumulators are not,
  // so repeated calls accumulate.
  void backward(Var loss);

  const Tensor& value(Var v) const { return nodes_[Check(v)].value; }
  const Tensor& grad(Var v) const { return nodes_[Check(v)].grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void()> back;  // empty for leaves
    Parameter* bound = nullptr;
    bool requires_grad = false;
  };

  std::size_t Check(Var v) const;
  Var Push(Tensor value, bool requires_grad, std::function<void()> back,
           Parameter* bound = nullptr);
  Tensor& grad_mut(Var v) { return nodes_[v.id].grad; }

  std::vector<Node> nodes_;
};

}  // namespace minirbt

#endif  // MINIRBT_TAPE_HPP_
