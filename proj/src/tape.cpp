// minirbt/tape.cpp

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

#include "minirbt/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace minirbt {

using kernels::Matmul;
using kernels::MatmulNT;
using kernels::MatmulTN;

std::size_t Tape::Check(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw std::logic_error("Tape: invalid Var handle");
  return static_cast<std::size_t>(v.id);
}

Var Tape::Push(Tensor value, bool requires_grad, std::function<void()> back,
               Parameter* bound) {
  Node n;
  n.grad = Tensor(value.shape);
  n.value = std::move(value);
  n.back = std::move(back);
  n.bound = bound;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  return Push(std::move(value), requires_grad, nullptr);
}

Var Tape::param(Parameter& p) {
  return Push(p.value, true, nullptr, &p);
}

Var Tape::matmul(Var a, Var b) {
  Tensor out = Matmul(value(a), value(b));
  bool rg = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  Push(std::move(out), rg, nullptr);
  Var cc{static_cast<std::int32_t>(nodes_.size() - 1)};
  nodes_[cc.id].back = [this, a, b, cc]() {
    const Tensor& dc = grad(cc);
    if (nodes_[a.id].requires_grad) {
      Tensor da = MatmulNT(dc, value(b));
      Tensor& ga = grad_mut(a);
      for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += da.data[i];
    }
    if (nodes_[b.id].requires_grad) {
      Tensor db = MatmulTN(value(a), dc);
      Tensor& gb = grad_mut(b);
      for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += db.data[i];
    }
  };
  return cc;
}

Var Tape::matmul_nt(Var a, Var b) {
  Tensor out = MatmulNT(value(a), value(b));
  bool rg = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  Push(std::move(out), rg, nullptr);
  Var c{static_cast<std::int32_t>(nodes_.size() - 1)};
  nodes_[c.id].back = [this, a, b, c]() {
    const Tensor& dc = grad(c);
    if (nodes_[a.id].requires_grad) {
      Tensor da = Matmul(dc, value(b));
      Tensor& ga = grad_mut(a);
      for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += da.data[i];
    }
    if (nodes_[b.id].requires_grad) {
      Tensor db = MatmulTN(dc, value(a));
      Tensor& gb = grad_mut(b);
      for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += db.data[i];
    }
  };
  return c;
}

Var Tape::add(Var a, Var b) {
  Tensor out = kernels::Add(value(a), value(b));
  bool rg = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  Push(std::move(out), rg, nullptr);
  Var c{static_cast<std::int32_t>(nodes_.size() - 1)};
  nodes_[c.id].back = [this, a, b, c]() {
    const Tensor& dc = grad(c);
    for (Var v : {a, b}) {
      if (!nodes_[v.id].requires_grad) continue;
      Tensor& g = grad_mut(v);
      for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += dc.data[i];
    }
  };
  return c;
}

Var Tape::add_rows(Var a, Var bias) {
  Tensor out = kernels::AddRows(value(a), value(bias));
  bool rg = nodes_[a.id].requires_grad || nodes_[bias.id].requires_grad;
  Push(std::move(out), rg, nullptr);
  Var c{static_cast<std::int32_t>(nodes_.size() - 1)};
  nodes_[c.id].back = [this, a, bias, c]() {
    const Tensor& dc = grad(c);
    std::size_t n = dc.shape.back();
    std::size_t rows = dc.numel() / n;
    if (nodes_[a.id].requires_grad) {
      Tensor& ga = grad_mut(a);
      for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += dc.data[i];
    }
    if (nodes_[bias.id].requires_grad) {
      Tensor& gb = grad_mut(bias);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) gb.data[j] += dc.data[r * n + j];
    }
  };
  return c;
}

Var Tape::mul(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv))
    throw std::invalid_argument("mul: shape mismatch " + av.shape_string() +
                                " vs " + bv.shape_string());
  Tensor out = av;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
  bool rg = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  Push(std::move(out), rg, nullptr);
  Var c{static_cast<std::int32_t>(nodes_.size() - 1)};
  nodes_[c.id].back = [this, a, b, c]() {
    const Tensor& dc = grad(c);
    if (nodes_[a.id].requires_grad) {
      Tensor& ga = grad_mut(a);
      const Tensor& bv2 = value(b);
      for (std::size_t i = 0; i < ga.data.size(); ++i)
        ga.data[i] += dc.data[i] * bv2.data[i];
    }
    if (nodes_[b.id].requires_grad) {
      Tensor& gb = grad_mut(b);
      const Tensor& av2 = value(a);
      for (std::size_t i = 0; i < gb.data.size(); ++i)
        gb.data[i] += dc.data[i] * av2.data[i];
    }
  };
  return c;
}

Var Tape::scale(Var a, double s) {
  Tensor out = value(a);
  for (double& v : out.data) v *= s;
  Push(std::move(out), nodes_[a.id].requires_grad, nullptr);
  Var c{static_cast<std::int32_t>(nodes_.size() - 1)};
  nodes_[c.id].back = [this, a, c, s]() {
    if (!nodes_[a.id].requires_grad) return;
    const Tensor& dc = grad(c);
    Tensor& ga = grad_mut(a);
    for (std::size_t i = 0; i < ga.data.size(); ++i)
      ga.data[i] += dc.data[i] * s;
  };
  return c;
}

Var Tape::gelu(Var a) {
  Tensor out = kernels::Gelu(value(a));
  Push(std::move(out), nodes_[a.id].requires_grad, nullptr);
  Var c{static_cast<std::int32_t>(nodes_.size() - 1)};
  nodes_[c.id].back = [this, a, c]() {
    if (!nodes_[a.id].requires_grad) return;
    const Tensor& dc = grad(c);
    const Tensor& x = value(a);
    Tensor& ga = grad_mut(a);
    for (std::size_t i = 0; i < ga.data.size(); ++i)
      ga.data[i] += dc.data[i] * kernels::GeluGradScalar(x.data[i]);
  };
  return c;
}

Var Tape::tanh_act(Var a) {
  Tensor out = kernels::Tanh(value(a));
  Push(std::move(out), nodes_[a.id].requires_grad, nullptr);
  Var c{static_cast<std::int32_t>(nodes_.size() - 1)};
  nodes_[c.id].back = [this, a, c]() {
    if (!nodes_[a.id].requires_grad) return;
    const Tensor& dc = grad(c);
    const Tensor& y = value(c);
    Tensor& ga = grad_mut(a);
    for (std::size_t i = 0; i < ga.data.size(); ++i)
      ga.data[i] += dc.data[i] * (1.0 - y.data[i] * y.data[i]);
  };
  return c;
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
  Tensor out = kernels::LayerNorm(value(x), value(gain), value(bias), eps);
  bool rg = nodes_[x.id].requires_grad || nodes_[gain.id].requires_grad ||
            nodes_[bias.id].requires_grad;
  Push(std::move(out), rg, nullptr);
  Var c{static_cast<std::int32_t>(nodes_.size() - 1)};
  nodes_[c.id].back = [this, x, gain, bias, c, eps]() {
    const Tensor& dc = grad(c);
    const Tensor& xv = value(x);
    const Tensor& gv = value(gain);
    std::size_t d = xv.shape.back();
    std::size_t rows = xv.numel() / d;
    std::vector<double> xhat(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* xr = xv.data.data() + r * d;
      const double* dyr = dc.data.data() + r * d;
      double mean = 0.0;
      for (std::size_t j = 0; j < d; ++j) mean += xr[j];
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        double cdev = xr[j] - mean;
        var += cdev * cdev;
      }
      var /= static_cast<double>(d);
      double inv = 1.0 / std::sqrt(var + eps);
      for (std::size_t j = 0; j < d; ++j) xhat[j] = (xr[j] - mean) * inv;

      if (nodes_[gain.id].requires_grad) {
        Tensor& gg = grad_mut(gain);
        for (std::size_t j = 0; j < d; ++j)
          gg.data[j] += dyr[j] * xhat[j];
      }
      if (nodes_[bias.id].requires_grad) {
        Tensor& gb = grad_mut(bias);
        for (std::size_t j = 0; j < d; ++j) gb.data[j] += dyr[j];
      }
      if (nodes_[x.id].requires_grad) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          double gdy = gv.data[j] * dyr[j];
          m1 += gdy;
          m2 += gdy * xhat[j];
        }
        m1 /= static_cast<double>(d);
        m2 /= static_cast<double>(d);
        Tensor& gx = grad_mut(x);
        double* gxr = gx.data.data() + r * d;
        for (std::size_t j = 0; j < d; ++j) {
          double gdy = gv.data[j] * dyr[j];
          gxr[j] += inv * (gdy - m1 - xhat[j] * m2);
        }
      }
    }
  };
  return c;
}

Var Tape::softmax_rows(Var a, double temperature) {
  return softmax_rows(a, temperature, value(a).shape.back());
}

Var Tape::softmax_rows(Var a, double temperature, std::size_t valid_cols) {
  Tensor out = kernels::SoftmaxRows(value(a), temperature, valid_cols);
  Push(std::move(out), nodes_[a.id].requires_grad, nullptr);
  Var c{static_cast<std::int32_t>(nodes_.size() - 1)};
  nodes_[c.id].back = [this, a, c, temperature, valid_cols]() {
    if (!nodes_[a.id].requires_grad) return;
    const Tensor& dc = grad(c);
    const Tensor& y = value(c);
    Tensor& ga = grad_mut(a);
    std::size_t n = y.shape.back();
    std::size_t rows = y.numel() / n;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yr = y.data.data() + r * n;
      const double* dyr = dc.data.data() + r * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < valid_cols; ++j) dot += dyr[j] * yr[j];
      double* gr = ga.data.data() + r * n;
      for (std::size_t j = 0; j < valid_cols; ++j)
        gr[j] += yr[j] * (dyr[j] - dot) / temperature;
    }
  };
  return c;
}

Var Tape::gather_rows(Var table, std::vector<std::size_t> ids) {
  const Tensor& tv = value(table);
  if (tv.shape.size() != 2)
    throw std::invalid_argument("gather_rows: table must be 2-d");
  std::size_t d = tv.shape[1];
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= tv.shape[0])
      throw std::out_of_range("gather_rows: id " + std::to_string(ids[i]) +
                              " out of range for table " + tv.shape_string());
    std::copy(tv.data.begin() + ids[i] * d, tv.data.begin() + (ids[i] + 1) * d,
              out.data.begin() + i * d);
  }
  Push(std::move(out), nodes_[table.id].requires_grad, nullptr);
  Var c{static_cast<std::int32_t>(nodes_.size() - 1)};
  nodes_[c.id].back = [this, table, c, ids = std::move(ids)]() {
    if (!nodes_[table.id].requires_grad) return;
    const Tensor& dc = grad(c);
    Tensor& gt = grad_mut(table);
    std::size_t d = gt.shape[1];
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = 0; j < d; ++j)
        gt.data[ids[i] * d + j] += dc.data[i * d + j];
  };
  return c;
}

Var Tape::select_rows(Var a, std::vector<std::size_t> rows) {
  return gather_rows(a, std::move(rows));
}

Var Tape::slice(Var a, std::size_t r0, std::size_t nr, std::size_t c0,
                std::size_t nc) {
  const Tensor& av = value(a);
  if (av.shape.size() != 2 || r0 + nr > av.shape[0] || c0 + nc > av.shape[1])
    throw std::out_of_range("slice: block out of range of " +
                            av.shape_string());
  std::size_t w = av.shape[1];
  Tensor out({nr, nc});
  for (std::size_t r = 0; r < nr; ++r)
    std::copy(av.data.begin() + (r0 + r) * w + c0,
              av.data.begin() + (r0 + r) * w + c0 + nc,
              out.data.begin() + r * nc);
  Push(std::move(out), nodes_[a.id].requires_grad, nullptr);
  Var c{static_cast<std::int32_t>(nodes_.size() - 1)};
  nodes_[c.id].back = [this, a, c, r0, nr, c0, nc]() {
    if (!nodes_[a.id].requires_grad) return;
    const Tensor& dc = grad(c);
    Tensor& ga = grad_mut(a);
    std::size_t w = ga.shape[1];
    for (std::size_t r = 0; r < nr; ++r)
      for (std::size_t j = 0; j < nc; ++j)
        ga.data[(r0 + r) * w + c0 + j] += dc.data[r * nc + j];
  };
  return c;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty list");
  std::size_t rows = value(parts[0]).shape[0];
  std::size_t total = 0;
  bool rg = false;
  for (Var p : parts) {
    if (value(p).shape[0] != rows)
      throw std::invalid_argument("concat_cols: row count mismatch");
    total += value(p).shape[1];
    rg = rg || nodes_[p.id].requires_grad;
  }
  Tensor out({rows, total});
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& pv = value(p);
    std::size_t w = pv.shape[1];
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(pv.data.begin() + r * w, pv.data.begin() + (r + 1) * w,
                out.data.begin() + r * total + off);
    off += w;
  }
  Push(std::move(out), rg, nullptr);
  Var c{static_cast<std::int32_t>(nodes_.size() - 1)};
  nodes_[c.id].back = [this, parts, c]() {
    const Tensor& dc = grad(c);
    std::size_t total = dc.shape[1];
    std::size_t rows = dc.shape[0];
    std::size_t off = 0;
    for (Var p : parts) {
      std::size_t w = value(p).shape[1];
      if (nodes_[p.id].requires_grad) {
        Tensor& gp = grad_mut(p);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < w; ++j)
            gp.data[r * w + j] += dc.data[r * total + off + j];
      }
      off += w;
    }
  };
  return c;
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty list");
  std::size_t w = value(parts[0]).shape[1];
  std::size_t rows = 0;
  bool rg = false;
  for (Var p : parts) {
    if (value(p).shape[1] != w)
      throw std::invalid_argument("concat_rows: width mismatch");
    rows += value(p).shape[0];
    rg = rg || nodes_[p.id].requires_grad;
  }
  Tensor out({rows, w});
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& pv = value(p);
    std::copy(pv.data.begin(), pv.data.end(), out.data.begin() + off);
    off += pv.data.size();
  }
  Push(std::move(out), rg, nullptr);
  Var c{static_cast<std::int32_t>(nodes_.size() - 1)};
  nodes_[c.id].back = [this, parts, c]() {
    const Tensor& dc = grad(c);
    std::size_t off = 0;
    for (Var p : parts) {
      std::size_t n = value(p).numel();
      if (nodes_[p.id].requires_grad) {
        Tensor& gp = grad_mut(p);
        for (std::size_t i = 0; i < n; ++i) gp.data[i] += dc.data[off + i];
      }
      off += n;
    }
  };
  return c;
}

Var Tape::sum(Var a) {
  double s = 0.0;
  for (double v : value(a).data) s += v;
  Push(Tensor::Scalar(s), nodes_[a.id].requires_grad, nullptr);
  Var c{static_cast<std::int32_t>(nodes_.size() - 1)};
  nodes_[c.id].back = [this, a, c]() {
    if (!nodes_[a.id].requires_grad) return;
    double dc = grad(c).data[0];
    Tensor& ga = grad_mut(a);
    for (double& g : ga.data) g += dc;
  };
  return c;
}

Var Tape::mse_rows(Var a, const Tensor& target,
                   const std::vector<std::uint8_t>& row_mask) {
  const Tensor& av = value(a);
  if (!av.same_shape(target))
    throw std::invalid_argument("mse_rows: shape mismatch " +
                                av.shape_string() + " vs " +
                                target.shape_string());
  std::size_t d = av.shape.back();
  std::size_t rows = av.numel() / d;
  if (row_mask.size() != rows)
    throw std::invalid_argument("mse_rows: mask length mismatch");
  std::size_t count = 0;
  for (auto m : row_mask) count += m ? 1 : 0;
  if (count == 0) throw std::invalid_argument("mse_rows: no selected rows");
  double denom = static_cast<double>(count * d);
  double s = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!row_mask[r]) continue;
    for (std::size_t j = 0; j < d; ++j) {
      double diff = av.data[r * d + j] - target.data[r * d + j];
      s += diff * diff;
    }
  }
  Push(Tensor::Scalar(s / denom), nodes_[a.id].requires_grad, nullptr);
  Var c{static_cast<std::int32_t>(nodes_.size() - 1)};
  nodes_[c.id].back = [this, a, c, target, row_mask, denom]() {
    if (!nodes_[a.id].requires_grad) return;
    double dc = grad(c).data[0];
    const Tensor& av2 = value(a);
    Tensor& ga = grad_mut(a);
    std::size_t d = av2.shape.back();
    std::size_t rows = av2.numel() / d;
    for (std::size_t r = 0; r < rows; ++r) {
      if (!row_mask[r]) continue;
      for (std::size_t j = 0; j < d; ++j)
        ga.data[r * d + j] += dc * 2.0 *
                              (av2.data[r * d + j] - target.data[r * d + j]) /
                              denom;
    }
  };
  return c;
}

Var Tape::cross_entropy_rows(Var logits,
                             const std::vector<std::int64_t>& labels) {
  const Tensor& lv = value(logits);
  std::size_t v = lv.shape.back();
  std::size_t rows = lv.numel() / v;
  if (labels.size() != rows)
    throw std::invalid_argument("cross_entropy: label count mismatch");
  std::size_t count = 0;
  for (auto l : labels)
    if (l >= 0) {
      if (static_cast<std::size_t>(l) >= v)
        throw std::out_of_range("cross_entropy: label out of range");
      ++count;
    }
  if (count == 0)
    throw std::invalid_argument("cross_entropy: no labeled rows");
  Tensor probs = kernels::SoftmaxRows(lv, 1.0, v);
  double s = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] < 0) continue;
    s -= std::log(probs.data[r * v + labels[r]]);
  }
  Push(Tensor::Scalar(s / count), nodes_[logits.id].requires_grad, nullptr);
  Var c{static_cast<std::int32_t>(nodes_.size() - 1)};
  nodes_[c.id].back = [this, logits, c, labels, probs = std::move(probs),
                       count]() {
    if (!nodes_[logits.id].requires_grad) return;
    double dc = grad(c).data[0];
    Tensor& g = grad_mut(logits);
    std::size_t v = probs.shape.back();
    std::size_t rows = probs.numel() / v;
    double inv = dc / static_cast<double>(count);
    for (std::size_t r = 0; r < rows; ++r) {
      if (labels[r] < 0) continue;
      for (std::size_t j = 0; j < v; ++j)
        g.data[r * v + j] += inv * probs.data[r * v + j];
      g.data[r * v + labels[r]] -= inv;
    }
  };
  return c;
}

Var Tape::soft_cross_entropy_rows(Var student_logits,
                                  const Tensor& teacher_logits,
                                  double temperature,
                                  const std::vector<std::uint8_t>& row_mask) {
  if (!(temperature > 0.0))
    throw std::invalid_argument("soft_cross_entropy: temperature must be > 0");
  const Tensor& sv = value(student_logits);
  if (!sv.same_shape(teacher_logits))
    throw std::invalid_argument("soft_cross_entropy: shape mismatch " +
                                sv.shape_string() + " vs " +
                                teacher_logits.shape_string());
  std::size_t v = sv.shape.back();
  std::size_t rows = sv.numel() / v;
  if (row_mask.size() != rows)
    throw std::invalid_argument("soft_cross_entropy: mask length mismatch");
  std::size_t count = 0;
  for (auto m : row_mask) count += m ? 1 : 0;
  if (count == 0)
    throw std::invalid_argument("soft_cross_entropy: no contributing rows");

  Tensor ps = kernels::SoftmaxRows(sv, temperature, v);
  Tensor pt = kernels::SoftmaxRows(teacher_logits, temperature, v);
  double s = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!row_mask[r]) continue;
    for (std::size_t j = 0; j < v; ++j)
      s -= pt.data[r * v + j] * std::log(ps.data[r * v + j]);
  }
  Push(Tensor::Scalar(s / count), nodes_[student_logits.id].requires_grad,
       nullptr);
  Var c{static_cast<std::int32_t>(nodes_.size() - 1)};
  nodes_[c.id].back = [this, student_logits, c, row_mask, temperature, count,
                       ps = std::move(ps), pt = std::move(pt)]() {
    if (!nodes_[student_logits.id].requires_grad) return;
    double dc = grad(c).data[0];
    Tensor& g = grad_mut(student_logits);
    std::size_t v = ps.shape.back();
    std::size_t rows = ps.numel() / v;
    double inv = dc / (temperature * static_cast<double>(count));
    for (std::size_t r = 0; r < rows; ++r) {
      if (!row_mask[r]) continue;
      for (std::size_t j = 0; j < v; ++j)
        g.data[r * v + j] += inv * (ps.data[r * v + j] - pt.data[r * v + j]);
    }
  };
  return c;
}

void Tape::backward(Var loss) {
  std::size_t li = Check(loss);
  if (nodes_[li].value.numel() != 1)
    throw std::logic_error("backward: loss must be scalar, got " +
                           nodes_[li].value.shape_string());
  for (Node& n : nodes_) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
  nodes_[li].grad.data[0] = 1.0;
  for (std::size_t i = li + 1; i-- > 0;) {
    if (nodes_[i].back && nodes_[i].requires_grad) nodes_[i].back();
  }
  for (Node& n : nodes_) {
    if (n.bound != nullptr) {
      for (std::size_t i = 0; i < n.grad.data.size(); ++i)
        n.bound->grad.data[i] += n.grad.data[i];
    }
  }
}

}  // namespace minirbt
