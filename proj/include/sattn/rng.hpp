#pragma once

#include <cstdint>
#include <vector>

#include "sattn/tensor.hpp"

namespace sattn {

/// Seeded generator with a fixed algorithm so streams are identical across
/// runs and platforms:
///   - raw stream: SplitMix64 (state += 0x9E3779B97F4A7C15, then two
///     xor-shift-multiply mixes),
///   - uniform doubles in [0,1): top 53 bits scaled by 2^-53,
///   - gaussians: Box-Muller on uniform pairs, spare value cached.
/// std::normal_distribution is deliberately not used; it is not pinned down
/// by the standard.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  double uniform();   // [0, 1)
  double gaussian();  // standard normal

  Tensor gaussian_tensor(std::vector<std::size_t> shape, Precision prec = Precision::f64);
  Tensor uniform_tensor(std::vector<std::size_t> shape, double lo, double hi,
                        Precision prec = Precision::f64);

  /// Derives an independent stream deterministically, for per-layer or
  /// per-worker seeding.
  static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sattn
