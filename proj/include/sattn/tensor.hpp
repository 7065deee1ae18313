#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sattn {

enum class Precision : std::uint8_t { f64, f32 };

std::size_t bytes_per_scalar(Precision p);
std::string to_string(Precision p);
Precision precision_from_string(const std::string& s);

/// Dense row-major numeric array.
///
/// Arithmetic always runs in double. A tensor tagged f32 is storage-accurate
/// single precision: every stored value is rounded through float and byte
/// accounting charges 4 bytes per scalar. All construction funnels through
/// the constructor, from(), or set(), so the rounding discipline cannot be
/// bypassed.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, Precision prec = Precision::f64);
  static Tensor from(std::vector<std::size_t> shape, std::vector<double> values,
                     Precision prec = Precision::f64);
  static Tensor full(std::vector<std::size_t> shape, double value,
                     Precision prec = Precision::f64);
  static Tensor identity(std::size_t n, Precision prec = Precision::f64);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const;
  std::size_t rows() const { return extent(0); }
  std::size_t cols() const { return extent(1); }
  std::size_t numel() const { return data_.size(); }
  Precision precision() const { return prec_; }
  std::size_t size_in_bytes() const { return numel() * bytes_per_scalar(prec_); }

  double at(std::size_t flat) const;
  double at(std::size_t i, std::size_t j) const;
  double at(std::size_t i, std::size_t j, std::size_t k) const;
  void set(std::size_t flat, double v);
  void set(std::size_t i, std::size_t j, double v);
  void set(std::size_t i, std::size_t j, std::size_t k, double v);

  std::span<const double> values() const { return data_; }

  Tensor reshaped(std::vector<std::size_t> new_shape) const;
  Tensor with_precision(Precision p) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  bool bit_equal(const Tensor& other) const;

  /// FNV-1a over the raw IEEE-754 bit patterns; used for frozen-weight and
  /// read-purity checks.
  std::uint64_t checksum() const;

 private:
  std::size_t flat_index(std::size_t i, std::size_t j) const;
  std::size_t flat_index(std::size_t i, std::size_t j, std::size_t k) const;

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
  Precision prec_ = Precision::f64;
};

}  // namespace sattn
