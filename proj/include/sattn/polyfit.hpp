#pragma once

#include <cstddef>
#include <vector>

namespace sattn {

struct PolyFit {
  std::vector<double> coeffs;  // ascending powers
  double r_squared = 0.0;
};

/// Least-squares polynomial fit via normal equations (intended for small
/// degrees). r_squared is 1 - SS_res / SS_tot; a constant target with zero
/// residual reports 1.
PolyFit fit_polynomial(const std::vector<double>& xs, const std::vector<double>& ys,
                       std::size_t degree);

/// Exact slope check helper: consecutive differences of ys; empty if fewer
/// than two points.
std::vector<double> consecutive_diffs(const std::vector<double>& ys);

}  // namespace sattn
