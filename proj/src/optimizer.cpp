// minirbt/optimizer.cpp

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

#include "minirbt/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace minirbt {

AdamW::AdamW(std::vector<Parameter*> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (Parameter* p : params_) {
    m_.emplace_back(p->value.shape);
    v_.emplace_back(p->value.shape);
  }
}

void AdamW::Step(double lr) {
  ++step_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t j = 0; j < p.value.data.size(); ++j) {
      double g = p.grad.data[j];
      if (!std::isfinite(g))
        throw std::runtime_error("adamw: non-finite gradient in '" + p.name +
                                 "' at step " + std::to_string(step_));
      m.data[j] = cfg_.beta1 * m.data[j] + (1.0 - cfg_.beta1) * g;
      v.data[j] = cfg_.beta2 * v.data[j] + (1.0 - cfg_.beta2) * g * g;
      double mhat = m.data[j] / bc1;
      double vhat = v.data[j] / bc2;
      p.value.data[j] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                               cfg_.weight_decay * p.value.data[j]);
    }
  }
}

void AdamW::ExportState(Container* c) const {
  c->meta.emplace_back("opt.step", std::to_string(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    c->tensors.emplace_back("opt.m." + params_[i]->name, m_[i]);
    c->tensors.emplace_back("opt.v." + params_[i]->name, v_[i]);
  }
}

void AdamW::ImportState(const Container& c) {
  const std::string* s = c.find_meta("opt.step");
  if (!s) throw std::runtime_error("adamw: checkpoint lacks optimizer state");
  step_ = std::stoull(*s);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Tensor* m = c.find_tensor("opt.m." + params_[i]->name);
    const Tensor* v = c.find_tensor("opt.v." + params_[i]->name);
    if (!m || !v)
      throw std::runtime_error("adamw: missing moments for " +
                               params_[i]->name);
    m_[i] = *m;
    v_[i] = *v;
  }
}

double ClipGradNorm(const std::vector<Parameter*>& params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params)
    for (double g : p->grad.data) sq += g * g;
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double s = max_norm / norm;
    for (Parameter* p : params)
      for (double& g : p->grad.data) g *= s;
  }
  return norm;
}

std::size_t Schedule::warmup_steps() const {
  return static_cast<std::size_t>(
      std::llround(warmup_frac * static_cast<double>(total_steps)));
}

double Schedule::lr(std::size_t step) const {
  if (total_steps == 0) return 0.0;
  std::size_t w = warmup_steps();
  if (step >= total_steps) return 0.0;
  if (w > 0 && step < w)
    return peak * static_cast<double>(step) / static_cast<double>(w);
  if (total_steps == w) return peak;
  // ratio first so lr(warmup) == peak exactly
  return peak * (static_cast<double>(total_steps - step) /
                 static_cast<double>(total_steps - w));
}

}  // namespace minirbt
