// minirbt/kernels.hpp

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

#ifndef MINIRBT_KERNELS_HPP_
#define MINIRBT_KERNELS_HPP_

#include <cmath>
#include <cstdint>
#include <vector>

#include "minirbt/tensor.hpp"

// Raw forward kernels shared by the autodiff tape and the inference-only
// path, so both produce bitwise-identical values.

namespace minirbt {
namespace kernels {

inline void CheckMatmul(const Tensor& a, const Tensor& b, bool b_transposed) {
  if (a.shape.size() != 2 || b.shape.size() != 2)
    throw std::invalid_argument("matmul: operands must be 2-d, got " +
                                a.shape_string() + " and " + b.shape_string());
  std::size_t bk = b_transposed ? b.shape[1] : b.shape[0];
  if (a.shape[1] != bk)
    throw std::invalid_argument("matmul: inner dimensions disagree, " +
                                a.shape_string() + " vs " + b.shape_string());
}

// c = a * b, [m x k] x [k x n]; ikj order for locality
inline Tensor Matmul(const Tensor& a, const Tensor& b) {
  CheckMatmul(a, b, false);
  std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor c({m, n});
  const double* pa = a.data.data();
  const double* pb = b.data.data();
  double* pc = c.data.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = pc + i * n;
    const double* ai = pa + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
  return c;
}

// c = a * b^T, [m x k] x [n x k]^T
inline Tensor MatmulNT(const Tensor& a, const Tensor& b) {
  CheckMatmul(a, b, true);
  std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[0];
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a.data.data() + i * k;
    double* ci = c.data.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b.data.data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] = s;
    }
  }
  return c;
}

// c = a^T * b, [k x m]^T x [k x n]; used by backward passes
inline Tensor MatmulTN(const Tensor& a, const Tensor& b) {
  if (a.shape[0] != b.shape[0])
    throw std::invalid_argument("matmul_tn: leading dimensions disagree, " +
                                a.shape_string() + " vs " + b.shape_string());
  std::size_t k = a.shape[0], m = a.shape[1], n = b.shape[1];
  Tensor c({m, n});
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a.data.data() + p * m;
    const double* bp = b.data.data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      double av = ap[i];
      if (av == 0.0) continue;
      double* ci = c.data.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
  return c;
}

inline Tensor Add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("add: shape mismatch " + a.shape_string() +
                                " vs " + b.shape_string());
  Tensor c = a;
  for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
  return c;
}

// rows of a plus a length-n row vector
inline Tensor AddRows(const Tensor& a, const Tensor& bias) {
  std::size_t n = a.shape.back();
  if (bias.numel() != n)
    throw std::invalid_argument("add_rows: bias length " +
                                bias.shape_string() + " vs row width " +
                                a.shape_string());
  Tensor c = a;
  std::size_t rows = c.numel() / n;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) c.data[r * n + j] += bias.data[j];
  return c;
}

inline double GeluScalar(double x) {
  return x * 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));  // x * Phi(x)
}

inline double GeluGradScalar(double x) {
  double phi = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
  double pdf = std::exp(-0.5 * x * x) * 0.3989422804014326779;
  return phi + x * pdf;
}

inline Tensor Gelu(const Tensor& a) {
  Tensor c = a;
  for (double& v : c.data) v = GeluScalar(v);
  return c;
}

inline Tensor Tanh(const Tensor& a) {
  Tensor c = a;
  for (double& v : c.data) v = std::tanh(v);
  return c;
}

// Row-wise softmax of logits / temperature over the first valid_cols
// columns; remaining columns are exact zero. Max-subtraction for stability.
inline Tensor SoftmaxRows(const Tensor& a, double temperature,
                          std::size_t valid_cols) {
  if (!(temperature > 0.0))
    throw std::invalid_argument("softmax: temperature must be positive");
  std::size_t n = a.shape.back();
  if (valid_cols == 0 || valid_cols > n)
    throw std::invalid_argument("softmax: invalid column count");
  Tensor c(a.shape);
  std::size_t rows = a.numel() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.data.data() + r * n;
    double* y = c.data.data() + r * n;
    double mx = x[0];
    for (std::size_t j = 1; j < valid_cols; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < valid_cols; ++j) {
      y[j] = std::exp((x[j] - mx) / temperature);
      z += y[j];
    }
    for (std::size_t j = 0; j < valid_cols; ++j) y[j] /= z;
    for (std::size_t j = valid_cols; j < n; ++j) y[j] = 0.0;
  }
  return c;
}

// Per-row zero-mean unit-variance normalization then affine.
inline Tensor LayerNorm(const Tensor& x, const Tensor& gain,
                        const Tensor& bias, double eps) {
  std::size_t d = x.shape.back();
  if (gain.numel() != d || bias.numel() != d)
    throw std::invalid_argument("layer_norm: gain/bias width mismatch with " +
                                x.shape_string());
  Tensor y(x.shape);
  std::size_t rows = x.numel() / d;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data.data() + r * d;
    double* yr = y.data.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double c = xr[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j)
      yr[j] = (xr[j] - mean) * inv * gain.data[j] + bias.data[j];
  }
  return y;
}

}  // namespace kernels
}  // namespace minirbt

#endif  // MINIRBT_KERNELS_HPP_
