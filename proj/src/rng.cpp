#include "sattn/rng.hpp"

#include <cmath>
#include <numbers>

namespace sattn {

std::uint64_t Rng::next_u64() {
  state_ += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // u1 in (0,1] so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

Tensor Rng::gaussian_tensor(std::vector<std::size_t> shape, Precision prec) {
  Tensor t(std::move(shape), prec);
  for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, gaussian());
  return t;
}

Tensor Rng::uniform_tensor(std::vector<std::size_t> shape, double lo, double hi, Precision prec) {
  Tensor t(std::move(shape), prec);
  for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, lo + (hi - lo) * uniform());
  return t;
}

std::uint64_t Rng::derive_seed(std::uint64_t seed, std::uint64_t stream) {
  Rng r(seed ^ (0x9E3779B97F4A7C15ull * (stream + 1)));
  return r.next_u64();
}

}  // namespace sattn
