#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace loopforge {

/// Thin wrapper over mt19937_64 whose derived draws are defined here rather than
/// by the standard library's distributions, so sequences are identical across
/// toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, n). n must be > 0.
  std::size_t below(std::size_t n) {
    // Lemire-style rejection keeps the draw unbiased.
    const std::uint64_t bound = n;
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return static_cast<std::size_t>(x % bound);
  }

  /// Uniform in [0, 1).
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  /// k distinct indices from [0, n), in draw order.
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
};

inline std::vector<std::size_t> Rng::sample_indices(std::size_t n, std::size_t k) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < k && i < n; ++i) {
    std::swap(pool[i], pool[i + below(n - i)]);
  }
  pool.resize(k < n ? k : n);
  return pool;
}

}  // namespace loopforge
