// SPDX-License-Identifier: Apache-2.0
#include "mtgrpo/rng.hpp"

#include <numeric>
#include <stdexcept>

namespace mtgrpo {

std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t Stream::derive_key(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t k = mix64(seed ^ 0x6a09e667f3bcc909ULL);
  for (std::uint64_t t : tags) k = mix64(k ^ mix64(t + 0x3c6ef372fe94f82bULL));
  return k;
}

std::uint64_t Stream::next_u64() { return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

double Stream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Stream::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Stream::below: n must be positive");
  // Lemire-style rejection to remove modulo bias.
  const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

int Stream::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw std::invalid_argument("categorical: weights must have positive sum");
  const double u = uniform() * total;
  double acc = 0.0;
  int last_positive = -1;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = static_cast<int>(i);
    if (u < acc) return last_positive;
  }
  return last_positive;  // rounding at the top end
}

std::vector<int> multinomial(int n, std::span<const double> p, Stream& rng) {
  if (n < 0) throw std::invalid_argument("multinomial: negative trial count");
  std::vector<int> counts(p.size(), 0);
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(rng.categorical(p))];
  return counts;
}

std::vector<std::size_t> permutation(std::size_t n, Stream& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace mtgrpo
