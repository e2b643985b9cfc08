// Copyright 2026 The ptx Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#ifndef PTX_RNG_HPP_
#define PTX_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "ptx/common.hpp"

namespace ptx {

/// SplitMix64 finalizer. Used for seeding and for hashing seed material.
constexpr std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Folds one 64-bit word into a running seed hash.
constexpr std::uint64_t HashCombine(std::uint64_t h, std::uint64_t word) {
  return SplitMix64(h ^ SplitMix64(word));
}

/// FNV-1a over the bytes of a string, for folding names into seeds.
constexpr std::uint64_t HashString(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Splittable random stream: xoshiro256++ state seeded from a 64-bit seed via
/// SplitMix64. Gaussians use the Box-Muller transform so that a given seed
/// yields the same bits on every platform (std::normal_distribution does not
/// guarantee that).
///
/// Child streams from `Split(tag)` depend only on this stream's seed and the
/// tag, never on how many draws were taken from the parent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t s = seed;
    for (auto& word : state_) {
      s += 0x9e3779b97f4a7c15ULL;
      word = SplitMix64(s);
    }
  }

  std::uint64_t seed() const { return seed_; }

  Rng Split(std::uint64_t tag) const { return Rng(HashCombine(seed_, tag)); }

  std::uint64_t NextU64() {
    const std::uint64_t result = Rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = Rotl(state_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double Uniform() {
    return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n) by rejection (no modulo bias).
  std::uint64_t UniformIndex(std::uint64_t n) {
    if (n == 0) throw Error(ErrorCode::kInvalidArgument, "UniformIndex(0)");
    const std::uint64_t limit = (~std::uint64_t{0} / n) * n;
    std::uint64_t x;
    do {
      x = NextU64();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller; the second variate is cached.
  double Normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = 1.0 - Uniform();  // (0, 1]
    const double u2 = Uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  Vector NormalVector(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = Normal();
    return v;
  }

  Matrix NormalMatrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    // Row-major draw order so that row i of a dataset only depends on the
    // draws before it.
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = Normal();
    }
    return m;
  }

  /// Random sign, +1 or -1 with equal probability.
  double Sign() { return (NextU64() >> 63) ? -1.0 : 1.0; }

 private:
  static constexpr std::uint64_t Rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t seed_;
  std::uint64_t state_[4];
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace ptx

#endif  // PTX_RNG_HPP_
