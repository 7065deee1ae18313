#include <stdexcept>
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "sattn/numerics.hpp"
#include "sattn/rng.hpp"
#include "sattn/tensor.hpp"
#include "support/test_util.hpp"

using namespace sattn;

namespace {

// Independent triple-loop product with a local accumulator; k ascending, as
// the contract requires.
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += a.at(i, l) * b.at(l, j);
      c.set(i, j, acc);
    }
  }
  return c;
}

}  // namespace

TEST_CASE("tensor basics and precision accounting") {
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.size_in_bytes() == 48);
  Tensor s({2, 3}, Precision::f32);
  CHECK(s.size_in_bytes() == 24);

  // Single precision is storage-accurate: writes round through float.
  const double fine = 1.0 + 1e-12;
  s.set(0, 0, fine);
  CHECK(s.at(0, 0) == static_cast<double>(static_cast<float>(fine)));
  CHECK(s.at(0, 0) != fine);

  Tensor r = t.reshaped({3, 2});
  CHECK(r.rows() == 3);
  CHECK_THROWS_AS(t.reshaped({4, 2}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({0, 2}), std::invalid_argument);

  Tensor a = Tensor::from({2}, {1.0, 2.0});
  Tensor b = Tensor::from({2}, {1.0, 2.0});
  CHECK(a.checksum() == b.checksum());
  b.set(1, 2.5);
  CHECK(a.checksum() != b.checksum());
  CHECK(a.bit_equal(Tensor::from({2}, {1.0, 2.0})));
}

TEST_CASE("rng produces the documented fixed stream") {
  Rng rng(42);
  CHECK(rng.next_u64() == 13679457532755275413ull);
  CHECK(rng.next_u64() == 2949826092126892291ull);
  CHECK(rng.next_u64() == 5139283748462763858ull);
  CHECK(rng.next_u64() == 6349198060258255764ull);
}

TEST_CASE("rng same seed gives identical tensors") {
  Rng a(987654321), b(987654321);
  const Tensor ta = a.gaussian_tensor({5, 7});
  const Tensor tb = b.gaussian_tensor({5, 7});
  CHECK(ta.bit_equal(tb));
  CHECK(a.uniform() == b.uniform());
  CHECK(Rng::derive_seed(3, 1) == Rng::derive_seed(3, 1));
  CHECK(Rng::derive_seed(3, 1) != Rng::derive_seed(3, 2));
}

TEST_CASE("matmul identity and zero cases") {
  Rng rng(7);
  const Tensor a = rng.gaussian_tensor({2, 2});
  CHECK(matmul(Tensor::identity(2), a).bit_equal(a));

  const Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  const Tensor z({2, 1});
  const Tensor prod = matmul(m, z);
  CHECK(prod.at(0, 0) == 0.0);
  CHECK(prod.at(1, 0) == 0.0);
}

TEST_CASE("matmul equals the triple-loop oracle exactly") {
  Rng rng(11);
  const Tensor a = rng.gaussian_tensor({5, 7});
  const Tensor b = rng.gaussian_tensor({7, 3});
  CHECK(matmul(a, b).bit_equal(matmul_oracle(a, b)));
}

TEST_CASE("matmul associativity with identity is bitwise") {
  Rng rng(13);
  const Tensor a = rng.gaussian_tensor({4, 4});
  const Tensor b = rng.gaussian_tensor({4, 6});
  CHECK(matmul(matmul(a, Tensor::identity(4)), b).bit_equal(matmul(a, b)));
}

TEST_CASE("matmul rejects mismatched inner extents") {
  CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 3})), std::invalid_argument);
}

TEST_CASE("softmax of equal values is uniform") {
  const Tensor x = Tensor::full({1, 5}, 3.25);
  const Tensor y = softmax_rows(x);
  for (std::size_t j = 0; j < 5; ++j) CHECK(y.at(0, j) == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("softmax mask forces single support") {
  const double inf = std::numeric_limits<double>::infinity();
  const Tensor x = Tensor::from({1, 2}, {0.0, 0.0});
  const Tensor mask = Tensor::from({1, 2}, {0.0, -inf});
  const Tensor y = softmax_rows(x, mask);
  CHECK(y.at(0, 0) == 1.0);
  CHECK(y.at(0, 1) == 0.0);

  const Tensor all_masked = Tensor::from({1, 2}, {-inf, -inf});
  CHECK_THROWS_AS(softmax_rows(x, all_masked), std::invalid_argument);
  CHECK_THROWS_AS(softmax_rows(x, Tensor::from({1, 2}, {0.0, -1.0})), std::invalid_argument);
}

TEST_CASE("softmax matches a long-double oracle within 1e-12") {
  Rng rng(21);
  const Tensor x = rng.uniform_tensor({4, 4}, -30.0, 30.0);
  const Tensor y = softmax_rows(x);
  for (std::size_t i = 0; i < 4; ++i) {
    long double sum = 0.0L;
    for (std::size_t j = 0; j < 4; ++j) sum += std::exp(static_cast<long double>(x.at(i, j)));
    for (std::size_t j = 0; j < 4; ++j) {
      const long double expect = std::exp(static_cast<long double>(x.at(i, j))) / sum;
      CHECK(std::abs(y.at(i, j) - static_cast<double>(expect)) <= 1e-12);
    }
  }
}

TEST_CASE("softmax rows sum to one per precision") {
  Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x64 = rng.uniform_tensor({3, 6}, -50.0, 50.0);
    const Tensor y64 = softmax_rows(x64);
    const Tensor x32 = rng.uniform_tensor({3, 6}, -50.0, 50.0, Precision::f32);
    const Tensor y32 = softmax_rows(x32);
    for (std::size_t i = 0; i < 3; ++i) {
      double s64 = 0.0, s32 = 0.0;
      for (std::size_t j = 0; j < 6; ++j) {
        CHECK(y64.at(i, j) >= 0.0);
        s64 += y64.at(i, j);
        s32 += y32.at(i, j);
      }
      CHECK(std::abs(s64 - 1.0) <= 1e-12);
      CHECK(std::abs(s32 - 1.0) <= 1e-5);
    }
  }
}

TEST_CASE("l2norm_rows basics") {
  const Tensor x = Tensor::from({1, 2}, {3.0, 4.0});
  const Tensor y = l2norm_rows(x);
  CHECK(y.at(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(y.at(0, 1) == doctest::Approx(0.8).epsilon(1e-15));

  const Tensor z = l2norm_rows(Tensor({2, 3}));
  for (std::size_t i = 0; i < z.numel(); ++i) CHECK(z.at(i) == 0.0);

  Rng rng(31);
  const Tensor r = l2norm_rows(rng.gaussian_tensor({6, 9}));
  for (std::size_t i = 0; i < 6; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < 9; ++j) sq += r.at(i, j) * r.at(i, j);
    CHECK(std::abs(std::sqrt(sq) - 1.0) <= 1e-12);
  }
}

TEST_CASE("rope identity at position zero") {
  Rng rng(41);
  const Tensor x = rng.gaussian_tensor({1, 8});
  const Tensor y = rope(x, {0});
  CHECK(test_util::max_abs_diff(x, y) == 0.0);
}

TEST_CASE("rope preserves norms") {
  Rng rng(42);
  const Tensor x = rng.gaussian_tensor({3, 8});
  const Tensor y = rope(x, {5, 17, 123});
  for (std::size_t i = 0; i < 3; ++i) {
    double nx = 0.0, ny = 0.0;
    for (std::size_t j = 0; j < 8; ++j) {
      nx += x.at(i, j) * x.at(i, j);
      ny += y.at(i, j) * y.at(i, j);
    }
    CHECK(std::abs(std::sqrt(nx) - std::sqrt(ny)) <= 1e-12);
  }
}

TEST_CASE("rope dot products depend only on position differences") {
  Rng rng(43);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor q = rng.gaussian_tensor({1, 12});
    const Tensor k = rng.gaussian_tensor({1, 12});
    const std::size_t p1 = 3 + static_cast<std::size_t>(rng.uniform() * 40);
    const std::size_t p2 = 1 + static_cast<std::size_t>(rng.uniform() * 40);
    const std::size_t shift = static_cast<std::size_t>(rng.uniform() * 100);
    auto dot = [](const Tensor& a, const Tensor& b) {
      double s = 0.0;
      for (std::size_t j = 0; j < a.numel(); ++j) s += a.at(j) * b.at(j);
      return s;
    };
    const double base_dot = dot(rope(q, {p1}), rope(k, {p2}));
    const double shifted = dot(rope(q, {p1 + shift}), rope(k, {p2 + shift}));
    CHECK(std::abs(base_dot - shifted) <= 1e-10);
  }
}

TEST_CASE("rope rejects odd widths and inverse undoes it") {
  CHECK_THROWS_AS(rope(Tensor({1, 3}), {0}), std::invalid_argument);
  Rng rng(44);
  const Tensor x = rng.gaussian_tensor({2, 6});
  const Tensor back = rope_inverse(rope(x, {9, 2}), {9, 2});
  CHECK(test_util::max_abs_diff(x, back) <= 1e-14);
}

TEST_CASE("head splitting round-trips and matches column slices") {
  Rng rng(51);
  const Tensor x = rng.gaussian_tensor({5, 12});
  const auto heads = split_heads(x, 3, 4);
  CHECK(heads.size() == 3);
  CHECK(heads[1].bit_equal(slice_cols(x, 4, 8)));
  CHECK(merge_heads(heads).bit_equal(x));
}
