// minirbt/tensor.hpp

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

#ifndef MINIRBT_TENSOR_HPP_
#define MINIRBT_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace minirbt {

/// Dense row-major n-d array of 64-bit floats. The universal value carrier;
/// gradients live in Tape nodes / Parameter accumulators, not here.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    data.assign(Numel(shape), 0.0);
  }
  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != Numel(shape))
      throw std::invalid_argument("Tensor: data size does not match shape " +
                                  ShapeString(shape));
  }

  static std::size_t Numel(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }
  std::size_t numel() const { return data.size(); }

  std::size_t rows() const {
    Require2d();
    return shape[0];
  }
  std::size_t cols() const {
    Require2d();
    return shape[1];
  }
  double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data[r * shape[1] + c];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  static std::string ShapeString(const std::vector<std::size_t>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i)
      os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
  }
  std::string shape_string() const { return ShapeString(shape); }

  static Tensor Zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }
  static Tensor Full(std::vector<std::size_t> s, double v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor Scalar(double v) { return Tensor({1}, {v}); }
  static Tensor Row(std::vector<double> v) {
    std::size_t n = v.size();
    return Tensor({1, n}, std::move(v));
  }
  static Tensor Matrix(std::size_t r, std::size_t c, std::vector<double> v) {
    return Tensor({r, c}, std::move(v));
  }

 private:
  void Require2d() const {
    if (shape.size() != 2)
      throw std::logic_error("Tensor: 2-d access on shape " +
                             ShapeString(shape));
  }
};

/// Trainable tensor with an additive gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;  // same shape, zeroed explicitly between steps

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape) {}

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

}  // namespace minirbt

#endif  // MINIRBT_TENSOR_HPP_
