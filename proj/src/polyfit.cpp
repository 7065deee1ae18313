#include "sattn/polyfit.hpp"

#include <cmath>
#include <stdexcept>

namespace sattn {

PolyFit fit_polynomial(const std::vector<double>& xs, const std::vector<double>& ys,
                       std::size_t degree) {
  if (xs.size() != ys.size() || xs.size() <= degree) {
    throw std::invalid_argument("fit_polynomial: need more points than the degree");
  }
  const std::size_t n = degree + 1;
  // Normal equations in long double; the systems here are tiny.
  std::vector<long double> a(n * n, 0.0L), b(n, 0.0L);
  for (std::size_t s = 0; s < xs.size(); ++s) {
    long double powers[16];
    powers[0] = 1.0L;
    for (std::size_t p = 1; p < 2 * n - 1 + 1 && p < 16; ++p) {
      powers[p] = powers[p - 1] * static_cast<long double>(xs[s]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) a[i * n + j] += powers[i + j];
      b[i] += powers[i] * static_cast<long double>(ys[s]);
    }
  }
  // Gaussian elimination with partial pivoting.
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::fabs(static_cast<double>(a[r * n + col])) >
          std::fabs(static_cast<double>(a[pivot * n + col]))) {
        pivot = r;
      }
    }
    if (a[pivot * n + col] == 0.0L) throw std::runtime_error("fit_polynomial: singular system");
    if (pivot != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a[pivot * n + j], a[col * n + j]);
      std::swap(b[pivot], b[col]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const long double f = a[r * n + col] / a[col * n + col];
      for (std::size_t j = col; j < n; ++j) a[r * n + j] -= f * a[col * n + j];
      b[r] -= f * b[col];
    }
  }
  std::vector<long double> coeffs(n, 0.0L);
  for (std::size_t i = n; i-- > 0;) {
    long double acc = b[i];
    for (std::size_t j = i + 1; j < n; ++j) acc -= a[i * n + j] * coeffs[j];
    coeffs[i] = acc / a[i * n + i];
  }

  PolyFit fit;
  fit.coeffs.assign(coeffs.begin(), coeffs.end());
  long double mean = 0.0L;
  for (double y : ys) mean += y;
  mean /= static_cast<long double>(ys.size());
  long double ss_tot = 0.0L, ss_res = 0.0L;
  for (std::size_t s = 0; s < xs.size(); ++s) {
    long double pred = 0.0L, xp = 1.0L;
    for (std::size_t i = 0; i < n; ++i) {
      pred += coeffs[i] * xp;
      xp *= static_cast<long double>(xs[s]);
    }
    const long double res = static_cast<long double>(ys[s]) - pred;
    const long double dev = static_cast<long double>(ys[s]) - mean;
    ss_res += res * res;
    ss_tot += dev * dev;
  }
  fit.r_squared = ss_tot == 0.0L ? (ss_res == 0.0L ? 1.0 : 0.0)
                                 : static_cast<double>(1.0L - ss_res / ss_tot);
  return fit;
}

std::vector<double> consecutive_diffs(const std::vector<double>& ys) {
  std::vector<double> out;
  for (std::size_t i = 1; i < ys.size(); ++i) out.push_back(ys[i] - ys[i - 1]);
  return out;
}

}  // namespace sattn
