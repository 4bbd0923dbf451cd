#pragma once

#include <cstdint>
#include <cstddef>
#include <limits>
#include <vector>

namespace gpc {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Stable sub-stream derivation: components seeded from one run seed must not
// share draws.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(base ^ splitmix64(stream + 1));
}

// Deterministic generator with explicit bit mappings. std:: distributions are
// implementation-defined, so every mapping is spelled out here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed)) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased draw from [0, n).
  std::size_t uniform_index(std::size_t n) {
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    std::uint64_t rem = (max % n + 1) % n;  // 2^64 mod n
    if (rem == 0) return static_cast<std::size_t>(next_u64() % n);
    const std::uint64_t bound = max - rem + 1;
    std::uint64_t r = next_u64();
    while (r >= bound) r = next_u64();
    return static_cast<std::size_t>(r % n);
  }

  // Fisher-Yates; does not rely on std::shuffle's unspecified draw order.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace gpc
