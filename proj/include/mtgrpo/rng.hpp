// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace mtgrpo {

/// Counter-based random stream.
///
/// A stream is a pure function of its 64-bit key and an internal counter, so
/// streams keyed by (seed, step, task, prompt, rollout) can be generated in any
/// order or in parallel and still reproduce the sequential result bit-for-bit.
/// Distributions are implemented here rather than taken from <random> because
/// the standard distributions are implementation-defined.
class Stream {
 public:
  explicit Stream(std::uint64_t key) : key_(key) {}

  /// Derives a child key from `seed` and a path of tags.
  static std::uint64_t derive_key(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);
  static Stream derive(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
    return Stream(derive_key(seed, tags));
  }

  std::uint64_t key() const { return key_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Index drawn from unnormalized nonnegative weights by inverse CDF.
  int categorical(std::span<const double> weights);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

/// Draws counts ~ Multinomial(n, p). p must be nonnegative with positive sum.
std::vector<int> multinomial(int n, std::span<const double> p, Stream& rng);

/// Fisher-Yates shuffle of indices [0, n).
std::vector<std::size_t> permutation(std::size_t n, Stream& rng);

}  // namespace mtgrpo
