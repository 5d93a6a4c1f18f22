#pragma once

#include <cstdint>
#include <string_view>

#include "hmpe/tensor.hpp"

namespace hmpe {

/// splitmix64 stream. Equal seeds give identical sequences on every platform;
/// floating-point draws are derived from the integer stream with exact
/// arithmetic so they are byte-reproducible too.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept;
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal() noexcept;
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;

  Tensor uniform_tensor(Shape shape, double lo, double hi);
  Tensor normal_tensor(Shape shape, double stddev);

 private:
  std::uint64_t state_;
};

/// Derives an independent sub-stream seed from a base seed and a label, so
/// each pipeline stage draws from its own stream regardless of what other
/// stages consume.
std::uint64_t derive_seed(std::uint64_t base, std::string_view label) noexcept;

}  // namespace hmpe
