#include <stdexcept>
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "sattn/gdn.hpp"
#include "sattn/numerics.hpp"
#include "sattn/rng.hpp"
#include "support/test_util.hpp"

using namespace sattn;

namespace {

struct FrameData {
  Tensor keys, values, alpha, beta;  // L-by-H-by-D, gates L-by-H
};

FrameData random_frame(std::size_t L, std::size_t H, std::size_t D, Rng& rng) {
  // Keys row-normalized per head, as the update contract expects.
  Tensor keys({L, H, D});
  for (std::size_t j = 0; j < L; ++j) {
    for (std::size_t h = 0; h < H; ++h) {
      const Tensor row = l2norm_rows(rng.gaussian_tensor({1, D}));
      for (std::size_t c = 0; c < D; ++c) keys.set(j, h, c, row.at(0, c));
    }
  }
  return {std::move(keys), rng.gaussian_tensor({L, H, D}),
          rng.uniform_tensor({L, H}, 0.05, 0.95), rng.uniform_tensor({L, H}, 0.05, 0.95)};
}

// Straight-line restatement of the token recurrence, written against the
// update rule directly: S <- (alpha I - beta k^T k) S + beta k^T v. This is
// the independent route the implementation is checked against.
Tensor oracle_state(const Tensor& s0, const FrameData& f) {
  const std::size_t L = f.keys.extent(0), H = f.keys.extent(1), D = f.keys.extent(2);
  Tensor s = s0;
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t j = 0; j < L; ++j) {
      const double a = f.alpha.at(j, h), b = f.beta.at(j, h);
      // transition = a I - b k^T k
      Tensor trans({D, D});
      for (std::size_t r = 0; r < D; ++r) {
        for (std::size_t c = 0; c < D; ++c) {
          const double id = r == c ? a : 0.0;
          trans.set(r, c, id - b * f.keys.at(j, h, r) * f.keys.at(j, h, c));
        }
      }
      Tensor sh({D, D});
      for (std::size_t r = 0; r < D; ++r) {
        for (std::size_t c = 0; c < D; ++c) sh.set(r, c, s.at(h, r, c));
      }
      const Tensor decayed = matmul(trans, sh);
      for (std::size_t r = 0; r < D; ++r) {
        for (std::size_t c = 0; c < D; ++c) {
          s.set(h, r, c, decayed.at(r, c) + b * f.keys.at(j, h, r) * f.values.at(j, h, c));
        }
      }
    }
  }
  return s;
}

}  // namespace

TEST_CASE("gate predictions sit at one half for zero inputs and saturate with the bias") {
  const std::size_t d = 6, H = 2;
  GatePredictors gp = GatePredictors::init_default(d, H);
  gp.b_alpha = Tensor({H});
  gp.b_beta = Tensor({H});
  const auto [alpha, beta] = predict_gates(Tensor({3, d}), gp);
  for (std::size_t i = 0; i < alpha.numel(); ++i) {
    CHECK(alpha.at(i) == 0.5);
    CHECK(beta.at(i) == 0.5);
  }

  gp.b_alpha = Tensor::full({H}, 200.0);
  const auto [alpha_sat, beta_unused] = predict_gates(Tensor({3, d}), gp);
  for (std::size_t i = 0; i < alpha_sat.numel(); ++i) {
    CHECK(alpha_sat.at(i) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("gate predictions stay strictly inside the unit interval on random input") {
  const std::size_t d = 8, H = 2;
  const GatePredictors gp = [&] {
    Rng rng(71);
    GatePredictors g = GatePredictors::init_default(d, H);
    g.w_alpha = scale(rng.gaussian_tensor({d, H}), 0.5);
    g.w_beta = scale(rng.gaussian_tensor({d, H}), 0.5);
    return g;
  }();
  Rng rng(72);
  std::size_t samples = 0;
  while (samples < 10000) {
    const auto [alpha, beta] = predict_gates(rng.gaussian_tensor({25, d}), gp);
    for (std::size_t i = 0; i < alpha.numel(); ++i, ++samples) {
      CHECK(alpha.at(i) > 0.0);
      CHECK(alpha.at(i) < 1.0);
      CHECK(beta.at(i) > 0.0);
      CHECK(beta.at(i) < 1.0);
    }
  }
}

TEST_CASE("alpha one and beta zero leave the state bitwise unchanged") {
  Rng rng(73);
  RecurrentState state(2, 4);
  state.s = rng.gaussian_tensor({2, 4, 4});
  const Tensor before = state.s;
  FrameData f = random_frame(3, 2, 4, rng);
  f.alpha = Tensor::full({3, 2}, 1.0);
  f.beta = Tensor({3, 2});
  update_sequential(state, f.keys, f.values, f.alpha, f.beta);
  CHECK(state.s.bit_equal(before));
  CHECK(state.write_count == 1);
}

TEST_CASE("rank-one write then readback retrieves the value") {
  const std::size_t D = 4;
  RecurrentState state(1, D);
  Rng rng(74);
  // Basis-vector key makes the retrieval identity exact in floating point.
  Tensor keys({1, 1, D});
  keys.set(0, 0, 0, 1.0);
  const Tensor values = rng.gaussian_tensor({1, 1, D});
  update_sequential(state, keys, values,
                    Tensor::full({1, 1}, 1.0), Tensor::full({1, 1}, 1.0));
  for (std::size_t c = 0; c < D; ++c) {
    CHECK(state.s.at(0, 0, c) == values.at(0, 0, c));
  }
  const Tensor out = query_state(state, keys);
  for (std::size_t c = 0; c < D; ++c) CHECK(out.at(0, 0, c) == values.at(0, 0, c));

  // Random unit key: same identity up to roundoff.
  RecurrentState s2(1, D);
  Tensor k2({1, 1, D});
  const Tensor unit = l2norm_rows(rng.gaussian_tensor({1, D}));
  for (std::size_t c = 0; c < D; ++c) k2.set(0, 0, c, unit.at(0, c));
  update_sequential(s2, k2, values, Tensor::full({1, 1}, 1.0), Tensor::full({1, 1}, 1.0));
  const Tensor out2 = query_state(s2, k2);
  for (std::size_t c = 0; c < D; ++c) {
    CHECK(std::abs(out2.at(0, 0, c) - values.at(0, 0, c)) <= 1e-12);
  }
}

TEST_CASE("sequential update matches the straight-line oracle") {
  Rng rng(75);
  RecurrentState state(2, 4);
  state.s = rng.gaussian_tensor({2, 4, 4});
  const Tensor s0 = state.s;
  const FrameData f = random_frame(5, 2, 4, rng);
  update_sequential(state, f.keys, f.values, f.alpha, f.beta);
  CHECK(test_util::max_abs_diff(state.s, oracle_state(s0, f)) <= 1e-12);
}

TEST_CASE("chunkwise equals sequential across chunk sizes") {
  Rng rng(76);
  SUBCASE("one chunk covers the frame") {
    for (std::size_t L : {1, 3, 7}) {
      RecurrentState seq(2, 4), chunk(2, 4);
      seq.s = rng.gaussian_tensor({2, 4, 4});
      chunk.s = seq.s;
      const FrameData f = random_frame(L, 2, 4, rng);
      update_sequential(seq, f.keys, f.values, f.alpha, f.beta);
      update_chunkwise(chunk, f.keys, f.values, f.alpha, f.beta, 64);
      CHECK(test_util::max_abs_diff(seq.s, chunk.s) <= 1e-10);
    }
  }
  SUBCASE("chunk size one degenerates to per-token blocks") {
    RecurrentState seq(2, 4), chunk(2, 4);
    const FrameData f = random_frame(6, 2, 4, rng);
    update_sequential(seq, f.keys, f.values, f.alpha, f.beta);
    update_chunkwise(chunk, f.keys, f.values, f.alpha, f.beta, 1);
    CHECK(test_util::max_abs_diff(seq.s, chunk.s) <= 1e-12);
  }
  SUBCASE("fifty seeds at L=16 chunk 4") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      Rng r(1000 + seed);
      RecurrentState seq(2, 4), chunk(2, 4);
      seq.s = r.gaussian_tensor({2, 4, 4});
      chunk.s = seq.s;
      const FrameData f = random_frame(16, 2, 4, r);
      update_sequential(seq, f.keys, f.values, f.alpha, f.beta);
      update_chunkwise(chunk, f.keys, f.values, f.alpha, f.beta, 4);
      CHECK(test_util::max_abs_diff(seq.s, chunk.s) <= 1e-10);
    }
  }
}

TEST_CASE("state size never changes and queries never write") {
  Rng rng(77);
  RecurrentState state(2, 4);
  const std::size_t bytes = state.size_in_bytes();
  for (int frame = 0; frame < 100; ++frame) {
    const FrameData f = random_frame(4, 2, 4, rng);
    update_chunkwise(state, f.keys, f.values, f.alpha, f.beta, kDefaultChunkSize);
    CHECK(state.size_in_bytes() == bytes);
  }
  CHECK(state.write_count == 100);

  const std::uint64_t sum_before = state.checksum();
  const Tensor queries = rng.gaussian_tensor({6, 2, 4});
  query_state(state, queries);
  CHECK(state.checksum() == sum_before);
}

TEST_CASE("the recurrence stays bounded over many random updates") {
  Rng rng(78);
  RecurrentState state(1, 4);
  double max_norm = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const FrameData f = random_frame(1, 1, 4, rng);
    update_sequential(state, f.keys, f.values, f.alpha, f.beta);
    max_norm = std::max(max_norm, std::sqrt(frobenius_norm_sq(state.s)));
  }
  CHECK(std::isfinite(max_norm));
  // Bounded values with gates inside (0,1) keep the map contractive.
  CHECK(max_norm < 1e3);
}

TEST_CASE("permuting query rows permutes outputs exactly") {
  Rng rng(79);
  RecurrentState state(2, 4);
  const FrameData f = random_frame(4, 2, 4, rng);
  update_sequential(state, f.keys, f.values, f.alpha, f.beta);
  const Tensor q = rng.gaussian_tensor({5, 2, 4});
  const Tensor out = query_state(state, q);

  const std::vector<std::size_t> perm = {4, 2, 0, 3, 1};
  Tensor q_perm({5, 2, 4});
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t h = 0; h < 2; ++h) {
      for (std::size_t c = 0; c < 4; ++c) q_perm.set(i, h, c, q.at(perm[i], h, c));
    }
  }
  const Tensor out_perm = query_state(state, q_perm);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t h = 0; h < 2; ++h) {
      for (std::size_t c = 0; c < 4; ++c) {
        CHECK(out_perm.at(i, h, c) == out.at(perm[i], h, c));
      }
    }
  }
}

TEST_CASE("zero state queries to zero and a zero key only decays") {
  RecurrentState state(1, 4);
  Rng rng(80);
  const Tensor out = query_state(state, rng.gaussian_tensor({3, 1, 4}));
  for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out.at(i) == 0.0);

  state.s = rng.gaussian_tensor({1, 4, 4});
  const Tensor before = state.s;
  const Tensor zero_key({1, 1, 4});
  const Tensor alpha = Tensor::full({1, 1}, 0.5);
  const Tensor beta = Tensor::full({1, 1}, 0.9);
  update_sequential(state, zero_key, rng.gaussian_tensor({1, 1, 4}), alpha, beta);
  CHECK(test_util::max_abs_diff(state.s, scale(before, 0.5).reshaped({1, 4, 4})) == 0.0);
}

TEST_CASE("a non-finite update is rejected with the state intact") {
  RecurrentState state(1, 2);
  Tensor keys({1, 1, 2});
  keys.set(0, 0, 0, 1.0);
  Tensor values({1, 1, 2});
  values.set(0, 0, 0, std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(update_sequential(state, keys, values, Tensor::full({1, 1}, 0.5),
                                    Tensor::full({1, 1}, 0.5)),
                  std::runtime_error);
  CHECK(state.write_count == 0);
}

TEST_CASE("update validates shapes") {
  RecurrentState state(2, 4);
  CHECK_THROWS_AS(update_sequential(state, Tensor({3, 1, 4}), Tensor({3, 1, 4}),
                                    Tensor({3, 2}), Tensor({3, 2})),
                  std::invalid_argument);
  CHECK_THROWS_AS(update_chunkwise(state, Tensor({3, 2, 4}), Tensor({3, 2, 4}),
                                   Tensor({3, 2}), Tensor({3, 2}), 0),
                  std::invalid_argument);
}
