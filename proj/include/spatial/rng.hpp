#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace spatial {

/// Philox4x32-10 counter-based generator. A stream is addressed by a 64-bit
/// key and a 64-bit stream id; draws within it walk a 64-bit counter, so any
/// (key, stream) pair can be replayed independently of what else was drawn.
class CounterRng {
 public:
  using Block = std::array<std::uint32_t, 4>;

  CounterRng(std::uint64_t key, std::uint64_t stream) noexcept;

  /// Key derived from a global seed and a per-item index (e.g. scene index).
  static std::uint64_t derive_key(std::uint64_t global_seed, std::uint64_t index) noexcept;

  static Block philox(Block counter, std::array<std::uint32_t, 2> key) noexcept;

  std::uint32_t next_u32() noexcept;
  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, bound) without modulo bias.
  std::uint64_t below(std::uint64_t bound) noexcept;
  /// Standard normal via Box-Muller; does not depend on libstdc++ distributions.
  double normal() noexcept;
  double normal(double mean, double sigma) noexcept { return mean + sigma * normal(); }

 private:
  void refill() noexcept;

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  Block buffer_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Fisher-Yates permutation of 0..n-1, stable across standard libraries.
std::vector<std::size_t> shuffled_indices(std::size_t n, CounterRng& rng);

}  // namespace spatial
