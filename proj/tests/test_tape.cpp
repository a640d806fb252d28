// tests/test_tape.cpp

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "testutil.hpp"

using namespace minirbt;
using testutil::MaxGradError;
using testutil::RandomTensor;

TEST_CASE("matmul forward") {
  Tape t;
  Var id2 = t.leaf(Tensor::Matrix(2, 2, {1, 0, 0, 1}));
  Var a = t.leaf(Tensor::Matrix(2, 2, {1, 2, 3, 4}));
  Var zero = t.leaf(Tensor::Matrix(2, 2, {0, 0, 0, 0}));
  Var b = t.leaf(Tensor::Matrix(2, 2, {5, 6, 7, 8}));

  CHECK(t.value(t.matmul(id2, a)).data == std::vector<double>{1, 2, 3, 4});
  CHECK(t.value(t.matmul(a, zero)).data == std::vector<double>{0, 0, 0, 0});
  CHECK(t.value(t.matmul(a, b)).data == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("matmul shape error names both shapes") {
  Tape t;
  Var a = t.leaf(Tensor::Matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  Var b = t.leaf(Tensor::Matrix(2, 2, {1, 2, 3, 4}));
  try {
    t.matmul(a, b);
    FAIL("expected shape error");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[2x2]") != std::string::npos);
  }
}

TEST_CASE("scaled softmax examples") {
  Tape t;
  Var z = t.leaf(Tensor::Row({0, 0}));
  auto p = t.value(t.softmax_rows(z, 8.0)).data;
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-14));

  // shift invariance: constant logits at any temperature
  for (double c : {-3.0, 0.0, 42.0}) {
    Var zc = t.leaf(Tensor::Row({c, c, c, c}));
    for (double temp : {0.5, 1.0, 8.0}) {
      auto q = t.value(t.softmax_rows(zc, temp)).data;
      for (double v : q) CHECK(v == doctest::Approx(0.25).epsilon(1e-14));
    }
  }

  Var z2 = t.leaf(Tensor::Row({8, 0}));
  auto p2 = t.value(t.softmax_rows(z2, 8.0)).data;
  double e = std::exp(1.0);
  CHECK(p2[0] == doctest::Approx(e / (1 + e)).epsilon(1e-12));
  CHECK(p2[1] == doctest::Approx(1 / (1 + e)).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and shift invariance on random logits") {
  Rng rng(11);
  Tape t;
  Tensor z = RandomTensor({6, 9}, rng, 3.0);
  Var p = t.softmax_rows(t.leaf(z), 2.5);
  Tensor shifted = z;
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t j = 0; j < 9; ++j) shifted.data[r * 9 + j] += 7.25;
  Var p2 = t.softmax_rows(t.leaf(shifted), 2.5);
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 9; ++j) s += t.value(p).data[r * 9 + j];
    CHECK(std::fabs(s - 1.0) <= 1e-12);
    for (std::size_t j = 0; j < 9; ++j)
      CHECK(t.value(p).data[r * 9 + j] ==
            doctest::Approx(t.value(p2).data[r * 9 + j]).epsilon(1e-12));
  }
}

TEST_CASE("softmax errors") {
  Tape t;
  Var z = t.leaf(Tensor::Row({1, 2}));
  CHECK_THROWS_AS(t.softmax_rows(z, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(t.softmax_rows(z, -2.0), std::invalid_argument);
  Var bad = t.leaf(Tensor::Row({std::nan(""), 1.0}));
  auto out = t.value(t.softmax_rows(bad, 1.0)).data;
  CHECK(std::isnan(out[0]));  // NaN propagates
  CHECK(std::isnan(out[1]));
}

TEST_CASE("layer norm examples") {
  Tape t;
  Var g1 = t.leaf(Tensor({3}, {1, 1, 1}));
  Var b0 = t.leaf(Tensor({3}, {0, 0, 0}));
  Var x = t.leaf(Tensor::Row({5, 5, 5}));
  auto y = t.value(t.layer_norm(x, g1, b0, kLayerNormEps)).data;
  for (double v : y) CHECK(std::fabs(v) < 1e-6);

  Var g2 = t.leaf(Tensor({2}, {1, 1}));
  Var b2 = t.leaf(Tensor({2}, {0, 0}));
  Var x2 = t.leaf(Tensor::Row({1, -1}));
  auto y2 = t.value(t.layer_norm(x2, g2, b2, kLayerNormEps)).data;
  CHECK(y2[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(y2[1] == doctest::Approx(-1.0).epsilon(1e-6));

  Var g0 = t.leaf(Tensor({3}, {0, 0, 0}));
  Var bb = t.leaf(Tensor({3}, {2.5, 2.5, 2.5}));
  Var x3 = t.leaf(Tensor::Row({3, 1, 4}));
  auto y3 = t.value(t.layer_norm(x3, g0, bb, kLayerNormEps)).data;
  for (double v : y3) CHECK(v == doctest::Approx(2.5).epsilon(1e-14));
}

TEST_CASE("gelu examples") {
  Tape t;
  Var x = t.leaf(Tensor::Row({0.0, 10.0, 1.0}));
  auto y = t.value(t.gelu(x)).data;
  CHECK(y[0] == 0.0);
  CHECK(std::fabs(y[1] - 10.0) < 1e-6);
  // x * Phi(x) at x=1 from a high-precision erf evaluation
  CHECK(y[2] == doctest::Approx(0.8413447460685429).epsilon(1e-12));
}

TEST_CASE("backward: linear and quadratic") {
  Tape t;
  Var x = t.leaf(Tensor::Matrix(2, 3, {1, -2, 3, 0.5, 4, -1}), true);
  Var loss = t.sum(x);
  t.backward(loss);
  for (double g : t.grad(x).data) CHECK(g == 1.0);

  Tape t2;
  Var x2 = t2.leaf(Tensor::Matrix(2, 3, {1, -2, 3, 0.5, 4, -1}), true);
  Var loss2 = t2.scale(t2.sum(t2.mul(x2, x2)), 0.5);
  t2.backward(loss2);
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(t2.grad(x2).data[i] == doctest::Approx(t2.value(x2).data[i]));
}

TEST_CASE("backward requires scalar loss") {
  Tape t;
  Var x = t.leaf(Tensor::Row({1, 2}), true);
  CHECK_THROWS_AS(t.backward(x), std::logic_error);
}

TEST_CASE("gradient accumulates across repeated backward calls") {
  Parameter p("p", Tensor::Row({2, 3}));
  Tape t;
  Var x = t.param(p);
  Var loss = t.sum(x);
  t.backward(loss);
  t.backward(loss);
  for (double g : p.grad.data) CHECK(g == 2.0);
}

TEST_CASE("finite differences: every primitive") {
  Rng rng(99);
  double err;

  err = MaxGradError(
      [](Tape& t, const std::vector<Var>& v) {
        return t.sum(t.matmul(v[0], v[1]));
      },
      {RandomTensor({3, 4}, rng), RandomTensor({4, 2}, rng)});
  CHECK(err < 1e-4);

  err = MaxGradError(
      [](Tape& t, const std::vector<Var>& v) {
        return t.sum(t.matmul_nt(v[0], v[1]));
      },
      {RandomTensor({3, 4}, rng), RandomTensor({5, 4}, rng)});
  CHECK(err < 1e-4);

  err = MaxGradError(
      [](Tape& t, const std::vector<Var>& v) {
        return t.sum(t.mul(t.add_rows(v[0], v[1]), t.add_rows(v[0], v[1])));
      },
      {RandomTensor({3, 4}, rng), RandomTensor({4}, rng)});
  CHECK(err < 1e-4);

  err = MaxGradError(
      [](Tape& t, const std::vector<Var>& v) {
        return t.sum(t.mul(t.layer_norm(v[0], v[1], v[2], kLayerNormEps),
                           t.layer_norm(v[0], v[1], v[2], kLayerNormEps)));
      },
      {RandomTensor({3, 5}, rng), RandomTensor({5}, rng),
       RandomTensor({5}, rng)});
  CHECK(err < 1e-4);

  err = MaxGradError(
      [](Tape& t, const std::vector<Var>& v) {
        Var p = t.softmax_rows(v[0], 2.0, 3);
        return t.sum(t.mul(p, p));
      },
      {RandomTensor({4, 5}, rng)});
  CHECK(err < 1e-4);

  err = MaxGradError(
      [](Tape& t, const std::vector<Var>& v) { return t.sum(t.gelu(v[0])); },
      {RandomTensor({3, 3}, rng)});
  CHECK(err < 1e-4);

  err = MaxGradError(
      [](Tape& t, const std::vector<Var>& v) {
        return t.sum(t.tanh_act(v[0]));
      },
      {RandomTensor({3, 3}, rng)});
  CHECK(err < 1e-4);

  err = MaxGradError(
      [](Tape& t, const std::vector<Var>& v) {
        Var s = t.slice(v[0], 1, 2, 0, 3);
        return t.sum(t.mul(s, s));
      },
      {RandomTensor({4, 4}, rng)});
  CHECK(err < 1e-4);

  err = MaxGradError(
      [](Tape& t, const std::vector<Var>& v) {
        Var c = t.concat_cols({v[0], v[1]});
        Var r = t.concat_rows({c, c});
        return t.sum(t.mul(r, r));
      },
      {RandomTensor({3, 2}, rng), RandomTensor({3, 3}, rng)});
  CHECK(err < 1e-4);

  err = MaxGradError(
      [](Tape& t, const std::vector<Var>& v) {
        Var g = t.gather_rows(v[0], {0, 2, 2, 1});
        return t.sum(t.mul(g, g));
      },
      {RandomTensor({3, 4}, rng)});
  CHECK(err < 1e-4);
}

TEST_CASE("finite differences: fused losses") {
  Rng rng(7);
  Tensor target = RandomTensor({4, 3}, rng);
  std::vector<std::uint8_t> mask = {1, 0, 1, 1};
  double err = MaxGradError(
      [&](Tape& t, const std::vector<Var>& v) {
        return t.mse_rows(v[0], target, mask);
      },
      {RandomTensor({4, 3}, rng)});
  CHECK(err < 1e-4);

  std::vector<std::int64_t> labels = {2, -100, 0, 4};
  err = MaxGradError(
      [&](Tape& t, const std::vector<Var>& v) {
        return t.cross_entropy_rows(v[0], labels);
      },
      {RandomTensor({4, 5}, rng, 2.0)});
  CHECK(err < 1e-4);

  Tensor teacher = RandomTensor({4, 5}, rng, 2.0);
  err = MaxGradError(
      [&](Tape& t, const std::vector<Var>& v) {
        return t.soft_cross_entropy_rows(v[0], teacher, 8.0, mask);
      },
      {RandomTensor({4, 5}, rng, 2.0)});
  CHECK(err < 1e-4);
}

TEST_CASE("fan-out sums both path gradients") {
  Rng rng(5);
  double err = MaxGradError(
      [](Tape& t, const std::vector<Var>& v) {
        // v[0] consumed twice through different paths
        Var a = t.matmul(v[0], v[1]);
        Var b = t.gelu(v[0]);
        return t.add(t.sum(a), t.sum(t.mul(b, b)));
      },
      {RandomTensor({3, 3}, rng), RandomTensor({3, 2}, rng)});
  CHECK(err < 1e-4);
}

TEST_CASE("replay determinism: identical graphs are bitwise identical") {
  Rng rng(123);
  Tensor a = RandomTensor({4, 4}, rng);
  Tensor b = RandomTensor({4, 4}, rng);
  auto run = [&](std::vector<double>* out_grad) {
    Tape t;
    Var va = t.leaf(a, true);
    Var vb = t.leaf(b, true);
    Var y = t.layer_norm(t.gelu(t.matmul(va, vb)),
                         t.leaf(Tensor({4}, {1, 1, 1, 1})),
                         t.leaf(Tensor({4}, {0, 0, 0, 0})), kLayerNormEps);
    Var loss = t.sum(t.mul(y, y));
    t.backward(loss);
    *out_grad = t.grad(va).data;
    return t.value(loss).data[0];
  };
  std::vector<double> g1, g2;
  double l1 = run(&g1);
  double l2 = run(&g2);
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}
