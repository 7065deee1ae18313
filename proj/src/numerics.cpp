#include "sattn/numerics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace sattn {

namespace {

void require_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2) throw std::invalid_argument(std::string(op) + ": expected a 2-d tensor");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

Tensor elementwise(const Tensor& a, const Tensor& b, const char* op, double (*f)(double, double)) {
  require_same_shape(a, b, op);
  std::vector<double> out(a.numel());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
  return Tensor::from(a.shape(), std::move(out), a.precision());
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw std::invalid_argument("matmul: inner extents disagree (" + std::to_string(k) + " vs " +
                                std::to_string(b.rows()) + ")");
  }
  std::vector<double> out(m * n, 0.0);
  auto av = a.values();
  auto bv = b.values();
  // i,k,j loop with accumulation into the output row: each C[i][j] still sums
  // its k terms in ascending order, which pins the bit pattern.
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = out.data() + i * n;
    const double* arow = av.data() + i * k;
    for (std::size_t l = 0; l < k; ++l) {
      const double x = arow[l];
      const double* brow = bv.data() + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += x * brow[j];
    }
  }
  return Tensor::from({m, n}, std::move(out), a.precision());
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  auto av = a.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  }
  return Tensor::from({n, m}, std::move(out), a.precision());
}

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise(a, b, "sub", [](double x, double y) { return x - y; });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  return elementwise(a, b, "hadamard", [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
  return Tensor::from(a.shape(), std::move(out), a.precision());
}

Tensor add_row_broadcast(const Tensor& m, const Tensor& row) {
  require_2d(m, "add_row_broadcast");
  const std::size_t n = m.cols();
  if (row.numel() != n) throw std::invalid_argument("add_row_broadcast: row width mismatch");
  std::vector<double> out(m.numel());
  auto mv = m.values();
  auto rv = row.values();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = mv[i * n + j] + rv[j];
  }
  return Tensor::from(m.shape(), std::move(out), m.precision());
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + c;
  return Tensor::from(a.shape(), std::move(out), a.precision());
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = av[i];
    if (x >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      out[i] = e / (1.0 + e);
    }
  }
  return Tensor::from(a.shape(), std::move(out), a.precision());
}

Tensor tanh_map(const Tensor& a) {
  std::vector<double> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(av[i]);
  return Tensor::from(a.shape(), std::move(out), a.precision());
}

namespace {

Tensor softmax_rows_impl(const Tensor& x, const Tensor* mask) {
  require_2d(x, "softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  auto xv = x.values();
  const double* mv = nullptr;
  if (mask != nullptr) {
    require_same_shape(x, *mask, "softmax_rows");
    mv = mask->values().data();
    for (std::size_t i = 0; i < mask->numel(); ++i) {
      const double e = mv[i];
      if (!(e == 0.0 || e == -std::numeric_limits<double>::infinity())) {
        throw std::invalid_argument("softmax_rows: mask entries must be 0 or -inf");
      }
    }
  }
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xv.data() + i * n;
    const double* mrow = mv ? mv + i * n : nullptr;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (mrow && mrow[j] != 0.0) continue;
      if (row[j] > mx) mx = row[j];
    }
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw std::invalid_argument("softmax_rows: fully masked row " + std::to_string(i));
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (mrow && mrow[j] != 0.0) continue;
      const double e = std::exp(row[j] - mx);
      out[i * n + j] = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < n; ++j) {
      if (mrow && mrow[j] != 0.0) continue;
      out[i * n + j] *= inv;
    }
  }
  return Tensor::from(x.shape(), std::move(out), x.precision());
}

}  // namespace

Tensor softmax_rows(const Tensor& x) { return softmax_rows_impl(x, nullptr); }

Tensor softmax_rows(const Tensor& x, const Tensor& mask) { return softmax_rows_impl(x, &mask); }

Tensor l2norm_rows(const Tensor& x) {
  require_2d(x, "l2norm_rows");
  const std::size_t m = x.rows(), n = x.cols();
  auto xv = x.values();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xv.data() + i * n;
    double sq = 0.0;
    for (std::size_t j = 0; j < n; ++j) sq += row[j] * row[j];
    const double norm = std::sqrt(sq);
    if (norm < kEpsNorm) continue;  // degenerate row stays zero
    const double inv = 1.0 / norm;
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = row[j] * inv;
  }
  return Tensor::from(x.shape(), std::move(out), x.precision());
}

namespace {

Tensor rope_impl(const Tensor& x, const std::vector<std::size_t>& positions, double base,
                 double sign) {
  require_2d(x, "rope");
  const std::size_t m = x.rows(), d = x.cols();
  if (d % 2 != 0) throw std::invalid_argument("rope: row width must be even");
  if (positions.size() != m) throw std::invalid_argument("rope: one position per row required");
  auto xv = x.values();
  std::vector<double> out(m * d);
  const double half = static_cast<double>(d);
  for (std::size_t i = 0; i < m; ++i) {
    const double pos = static_cast<double>(positions[i]);
    const double* row = xv.data() + i * d;
    for (std::size_t p = 0; p < d / 2; ++p) {
      const double freq = std::pow(base, -2.0 * static_cast<double>(p) / half);
      const double angle = sign * pos * freq;
      const double c = std::cos(angle), s = std::sin(angle);
      const double a = row[2 * p], b = row[2 * p + 1];
      out[i * d + 2 * p] = a * c - b * s;
      out[i * d + 2 * p + 1] = a * s + b * c;
    }
  }
  return Tensor::from(x.shape(), std::move(out), x.precision());
}

}  // namespace

Tensor rope(const Tensor& x, const std::vector<std::size_t>& positions, double base) {
  return rope_impl(x, positions, base, 1.0);
}

Tensor rope_inverse(const Tensor& x, const std::vector<std::size_t>& positions, double base) {
  return rope_impl(x, positions, base, -1.0);
}

std::vector<Tensor> split_heads(const Tensor& x, std::size_t num_heads, std::size_t head_dim) {
  Tensor flat = x.ndim() == 3 ? x.reshaped({x.extent(0), x.extent(1) * x.extent(2)}) : x;
  require_2d(flat, "split_heads");
  if (flat.cols() != num_heads * head_dim) {
    throw std::invalid_argument("split_heads: width is not heads * head_dim");
  }
  const std::size_t m = flat.rows();
  auto xv = flat.values();
  std::vector<Tensor> heads;
  heads.reserve(num_heads);
  for (std::size_t h = 0; h < num_heads; ++h) {
    std::vector<double> out(m * head_dim);
    for (std::size_t i = 0; i < m; ++i) {
      const double* src = xv.data() + i * num_heads * head_dim + h * head_dim;
      for (std::size_t j = 0; j < head_dim; ++j) out[i * head_dim + j] = src[j];
    }
    heads.push_back(Tensor::from({m, head_dim}, std::move(out), flat.precision()));
  }
  return heads;
}

Tensor merge_heads(const std::vector<Tensor>& heads) {
  if (heads.empty()) throw std::invalid_argument("merge_heads: no heads");
  const std::size_t m = heads[0].rows(), hd = heads[0].cols();
  std::vector<double> out(m * heads.size() * hd);
  for (std::size_t h = 0; h < heads.size(); ++h) {
    if (heads[h].rows() != m || heads[h].cols() != hd) {
      throw std::invalid_argument("merge_heads: head shape mismatch");
    }
    auto hv = heads[h].values();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < hd; ++j) {
        out[i * heads.size() * hd + h * hd + j] = hv[i * hd + j];
      }
    }
  }
  return Tensor::from({m, heads.size() * hd}, std::move(out), heads[0].precision());
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  for (const Tensor& p : parts) {
    require_2d(p, "concat_rows");
    if (p.cols() != n) throw std::invalid_argument("concat_rows: column mismatch");
    m += p.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  for (const Tensor& p : parts) {
    auto pv = p.values();
    out.insert(out.end(), pv.begin(), pv.end());
  }
  return Tensor::from({m, n}, std::move(out), parts[0].precision());
}

Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t r1) {
  require_2d(x, "slice_rows");
  if (r0 >= r1 || r1 > x.rows()) throw std::invalid_argument("slice_rows: bad range");
  const std::size_t n = x.cols();
  auto xv = x.values();
  std::vector<double> out(xv.begin() + r0 * n, xv.begin() + r1 * n);
  return Tensor::from({r1 - r0, n}, std::move(out), x.precision());
}

Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1) {
  require_2d(x, "slice_cols");
  if (c0 >= c1 || c1 > x.cols()) throw std::invalid_argument("slice_cols: bad range");
  const std::size_t m = x.rows(), n = x.cols(), w = c1 - c0;
  auto xv = x.values();
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = xv[i * n + c0 + j];
  }
  return Tensor::from({m, w}, std::move(out), x.precision());
}

double frobenius_norm_sq(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return s;
}

}  // namespace sattn
