// minirbt/rng.hpp

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

#ifndef MINIRBT_RNG_HPP_
#define MINIRBT_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <random>

namespace minirbt {

// splitmix64 finalizer; used to derive independent stream seeds from
// (base_seed, epoch, index) tuples so parallel sample generation stays
// reproducible.
inline std::uint64_t MixBits(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t DeriveSeed(std::uint64_t base, std::uint64_t a,
                                std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = MixBits(base);
  s = MixBits(s ^ a);
  s = MixBits(s ^ b);
  s = MixBits(s ^ c);
  return s;
}

/// Deterministic RNG wrapper. Distribution code is hand-rolled so streams
/// are bitwise stable across standard-library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // uniform in [0,1)
  double next_double() {
    return (gen_() >> 11) * 0x1.0p-53;
  }

  // uniform integer in [0, n)
  std::uint64_t next_below(std::uint64_t n) { return gen_() % n; }

  // standard normal via Box-Muller (one value per call, cache discarded
  // to keep the stream position simple)
  double next_normal() {
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // normal(0, sigma) truncated to [-2 sigma, 2 sigma], BERT-style init
  double next_trunc_normal(double sigma) {
    for (;;) {
      double x = next_normal();
      if (x >= -2.0 && x <= 2.0) return x * sigma;
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = next_below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace minirbt

#endif  // MINIRBT_RNG_HPP_
