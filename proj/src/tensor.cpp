#include "sattn/tensor.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

namespace sattn {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw std::invalid_argument("tensor: empty shape");
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e == 0) throw std::invalid_argument("tensor: zero extent");
    n *= e;
  }
  return n;
}

inline double quantize(double v, Precision p) {
  return p == Precision::f32 ? static_cast<double>(static_cast<float>(v)) : v;
}

}  // namespace

std::size_t bytes_per_scalar(Precision p) {
  return p == Precision::f32 ? 4 : 8;
}

std::string to_string(Precision p) {
  return p == Precision::f32 ? "single" : "double";
}

Precision precision_from_string(const std::string& s) {
  if (s == "double") return Precision::f64;
  if (s == "single") return Precision::f32;
  throw std::invalid_argument("precision must be 'double' or 'single', got '" + s + "'");
}

Tensor::Tensor(std::vector<std::size_t> shape, Precision prec) : prec_(prec) {
  const std::size_t n = shape_product(shape);
  shape_ = std::move(shape);
  data_.assign(n, 0.0);
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values, Precision prec) {
  if (shape_product(shape) != values.size()) {
    throw std::invalid_argument("tensor: value count does not match shape");
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.prec_ = prec;
  if (prec == Precision::f32) {
    for (double& v : values) v = quantize(v, prec);
  }
  t.data_ = std::move(values);
  return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, Precision prec) {
  Tensor t(std::move(shape), prec);
  const double q = quantize(value, prec);
  for (double& v : t.data_) v = q;
  return t;
}

Tensor Tensor::identity(std::size_t n, Precision prec) {
  Tensor t({n, n}, prec);
  for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
  return t;
}

std::size_t Tensor::extent(std::size_t axis) const {
  if (axis >= shape_.size()) throw std::invalid_argument("tensor: axis out of range");
  return shape_[axis];
}

std::size_t Tensor::flat_index(std::size_t i, std::size_t j) const {
  if (shape_.size() != 2) throw std::invalid_argument("tensor: 2-d access on non-2-d tensor");
  if (i >= shape_[0] || j >= shape_[1]) throw std::out_of_range("tensor: index out of range");
  return i * shape_[1] + j;
}

std::size_t Tensor::flat_index(std::size_t i, std::size_t j, std::size_t k) const {
  if (shape_.size() != 3) throw std::invalid_argument("tensor: 3-d access on non-3-d tensor");
  if (i >= shape_[0] || j >= shape_[1] || k >= shape_[2]) {
    throw std::out_of_range("tensor: index out of range");
  }
  return (i * shape_[1] + j) * shape_[2] + k;
}

double Tensor::at(std::size_t flat) const {
  if (flat >= data_.size()) throw std::out_of_range("tensor: flat index out of range");
  return data_[flat];
}

double Tensor::at(std::size_t i, std::size_t j) const { return data_[flat_index(i, j)]; }

double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
  return data_[flat_index(i, j, k)];
}

void Tensor::set(std::size_t flat, double v) {
  if (flat >= data_.size()) throw std::out_of_range("tensor: flat index out of range");
  data_[flat] = quantize(v, prec_);
}

void Tensor::set(std::size_t i, std::size_t j, double v) {
  data_[flat_index(i, j)] = quantize(v, prec_);
}

void Tensor::set(std::size_t i, std::size_t j, std::size_t k, double v) {
  data_[flat_index(i, j, k)] = quantize(v, prec_);
}

Tensor Tensor::reshaped(std::vector<std::size_t> new_shape) const {
  if (shape_product(new_shape) != numel()) {
    throw std::invalid_argument("tensor: reshape changes element count");
  }
  Tensor t;
  t.shape_ = std::move(new_shape);
  t.data_ = data_;
  t.prec_ = prec_;
  return t;
}

Tensor Tensor::with_precision(Precision p) const {
  if (p == prec_) return *this;
  return Tensor::from(shape_, std::vector<double>(data_.begin(), data_.end()), p);
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool Tensor::bit_equal(const Tensor& other) const {
  if (shape_ != other.shape_) return false;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(data_[i]) != std::bit_cast<std::uint64_t>(other.data_[i])) {
      return false;
    }
  }
  return true;
}

std::uint64_t Tensor::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](std::uint64_t word) {
    for (int b = 0; b < 8; ++b) {
      h ^= (word >> (8 * b)) & 0xffu;
      h *= 0x100000001b3ull;
    }
  };
  for (std::size_t e : shape_) mix(e);
  for (double v : data_) mix(std::bit_cast<std::uint64_t>(v));
  return h;
}

}  // namespace sattn
