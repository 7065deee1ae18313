#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "sattn/autodiff.hpp"
#include "sattn/numerics.hpp"
#include "sattn/rng.hpp"
#include "support/test_util.hpp"

using namespace sattn;
using ad::Tape;
using ad::Var;

namespace {

// Generic per-op check: loss(x) = sum(f(x) . R) for a fixed random weighting
// R, gradient against central finite differences on every element of x.
void check_op(const std::function<Var(Tape&, Var)>& op, Tensor x, double tol = 1e-6) {
  Rng rng(999);
  Tensor weight;
  {
    Tape probe;
    const Tensor out = probe.value(op(probe, probe.constant(x)));
    weight = rng.gaussian_tensor(out.shape());
  }
  auto loss_at = [&](const Tensor& point) {
    Tape t;
    Var v = op(t, t.input(point));
    Var l = t.sum_all(t.hadamard(v, t.constant(weight)));
    return t.value(l).at(0);
  };

  Tape t;
  Var in = t.input(x);
  Var l = t.sum_all(t.hadamard(op(t, in), t.constant(weight)));
  t.backward(l);
  const Tensor grad = t.grad(in);

  const auto report = test_util::fd_check_param(
      [&]() { return loss_at(x); }, x, grad, 1e-6, tol, 1e-9);
  CHECK(report.violations == 0);
}

}  // namespace

TEST_CASE("taped forwards equal the plain kernels bitwise") {
  Rng rng(1);
  const Tensor a = rng.gaussian_tensor({3, 4});
  const Tensor b = rng.gaussian_tensor({4, 5});
  Tape t;
  CHECK(t.value(t.matmul(t.constant(a), t.constant(b))).bit_equal(matmul(a, b)));
  CHECK(t.value(t.softmax_rows(t.constant(a))).bit_equal(softmax_rows(a)));
  CHECK(t.value(t.l2norm_rows(t.constant(a))).bit_equal(l2norm_rows(a)));
  CHECK(t.value(t.rope(t.constant(a), {3, 1, 9})).bit_equal(rope(a, {3, 1, 9})));
  CHECK(t.value(t.sigmoid(t.constant(a))).bit_equal(sigmoid(a)));
}

TEST_CASE("matmul adjoints for both arguments") {
  Rng rng(2);
  const Tensor a = rng.gaussian_tensor({3, 4});
  const Tensor b = rng.gaussian_tensor({4, 5});
  check_op([&](Tape& t, Var x) { return t.matmul(x, t.constant(b)); }, a);
  check_op([&](Tape& t, Var x) { return t.matmul(t.constant(a), x); }, b);
}

TEST_CASE("elementwise and broadcast adjoints") {
  Rng rng(3);
  const Tensor a = rng.gaussian_tensor({3, 4});
  const Tensor b = rng.gaussian_tensor({3, 4});
  const Tensor row = rng.gaussian_tensor({4});
  check_op([&](Tape& t, Var x) { return t.add(x, t.constant(b)); }, a);
  check_op([&](Tape& t, Var x) { return t.sub(t.constant(b), x); }, a);
  check_op([&](Tape& t, Var x) { return t.hadamard(x, t.constant(b)); }, a);
  check_op([&](Tape& t, Var x) { return t.scale(x, -2.25); }, a);
  check_op([&](Tape& t, Var x) { return t.add_scalar(x, 0.75); }, a);
  check_op([&](Tape& t, Var x) { return t.add_row_broadcast(x, t.constant(row)); }, a);
  check_op([&](Tape& t, Var x) { return t.add_row_broadcast(t.constant(a), x); }, row);
}

TEST_CASE("nonlinearity adjoints") {
  Rng rng(4);
  const Tensor a = rng.gaussian_tensor({3, 4});
  check_op([](Tape& t, Var x) { return t.sigmoid(x); }, a);
  check_op([](Tape& t, Var x) { return t.tanh_op(x); }, a);
  check_op([](Tape& t, Var x) { return t.softmax_rows(x); }, a, 1e-5);
  check_op([](Tape& t, Var x) { return t.l2norm_rows(x); }, a, 1e-5);
}

TEST_CASE("rotary position adjoint") {
  Rng rng(5);
  const Tensor a = rng.gaussian_tensor({3, 8});
  check_op([](Tape& t, Var x) { return t.rope(x, {4, 0, 11}); }, a);
}

TEST_CASE("structural op adjoints") {
  Rng rng(6);
  const Tensor a = rng.gaussian_tensor({4, 6});
  check_op([](Tape& t, Var x) { return t.transpose(x); }, a);
  check_op([](Tape& t, Var x) { return t.reshape(x, {2, 12}); }, a);
  check_op([](Tape& t, Var x) { return t.slice_rows(x, 1, 3); }, a);
  check_op([](Tape& t, Var x) { return t.slice_cols(x, 2, 5); }, a);
  check_op([](Tape& t, Var x) { return t.concat_rows({x, t.slice_rows(x, 0, 2)}); }, a);
  check_op([](Tape& t, Var x) { return t.concat_cols({x, t.slice_cols(x, 0, 3)}); }, a);
  check_op([](Tape& t, Var x) { return t.element(x, 2, 4); }, a);
}

TEST_CASE("scalar gating adjoints") {
  Rng rng(7);
  const Tensor a = rng.gaussian_tensor({3, 3});
  const Tensor s = rng.gaussian_tensor({1, 1});
  check_op([&](Tape& t, Var x) { return t.scale_by(x, t.constant(s)); }, a);
  check_op([&](Tape& t, Var x) { return t.scale_by(t.constant(a), x); }, s);
  check_op([](Tape& t, Var x) { return t.sum_all(x); }, a);
}

TEST_CASE("gate expansion adjoints per granularity") {
  Rng rng(8);
  const std::size_t H = 2, D = 3;
  check_op([&](Tape& t, Var x) { return t.expand_gate(x, GateGranularity::scalar, H, D); },
           rng.gaussian_tensor({4, 1}));
  check_op([&](Tape& t, Var x) { return t.expand_gate(x, GateGranularity::headwise, H, D); },
           rng.gaussian_tensor({4, H}));
  check_op([&](Tape& t, Var x) { return t.expand_gate(x, GateGranularity::elementwise, H, D); },
           rng.gaussian_tensor({4, H * D}));
}

TEST_CASE("mse composition against finite differences") {
  Rng rng(9);
  const Tensor target = rng.gaussian_tensor({3, 4});
  Tensor x = rng.gaussian_tensor({3, 4});
  auto loss_at = [&](const Tensor& point) {
    Tape t;
    return t.value(t.mse(t.input(point), t.constant(target), 12.0)).at(0);
  };
  Tape t;
  Var in = t.input(x);
  Var l = t.mse(in, t.constant(target), 12.0);
  t.backward(l);
  const auto report = test_util::fd_check_param([&]() { return loss_at(x); }, x, t.grad(in));
  CHECK(report.violations == 0);
  CHECK(t.value(l).at(0) == doctest::Approx(frobenius_norm_sq(sub(x, target)) / 12.0));
}

TEST_CASE("gradients flow through a small gated recurrence") {
  // One head, three tokens: the taped per-token update chain against finite
  // differences of a plain recomputation.
  Rng rng(10);
  const std::size_t D = 4, L = 3;
  Tensor keys_raw = rng.gaussian_tensor({L, D});
  const Tensor values = rng.gaussian_tensor({L, D});
  const Tensor alpha = rng.uniform_tensor({L, 1}, 0.2, 0.9);
  const Tensor beta = rng.uniform_tensor({L, 1}, 0.2, 0.9);
  const Tensor query = rng.gaussian_tensor({1, D});

  auto build = [&](Tape& t, Var kraw) {
    Var k = t.l2norm_rows(kraw);
    Var s = t.constant(Tensor({D, D}));
    for (std::size_t j = 0; j < L; ++j) {
      Var kj = t.slice_rows(k, j, j + 1);
      Var vj = t.constant(slice_rows(values, j, j + 1));
      Var delta = t.sub(vj, t.matmul(kj, s));
      s = t.add(t.scale_by(s, t.constant(slice_rows(alpha, j, j + 1))),
                t.scale_by(t.matmul(t.transpose(kj), delta),
                           t.constant(slice_rows(beta, j, j + 1))));
    }
    Var out = t.matmul(t.constant(query), s);
    return t.sum_all(t.hadamard(out, out));
  };
  auto loss_at = [&](const Tensor& point) {
    Tape t;
    return t.value(build(t, t.input(point))).at(0);
  };
  Tape t;
  Var in = t.input(keys_raw);
  Var l = build(t, in);
  t.backward(l);
  const auto report = test_util::fd_check_param([&]() { return loss_at(keys_raw); }, keys_raw,
                                                t.grad(in), 1e-5, 1e-4, 1e-8);
  CHECK(report.checked == keys_raw.numel());
  CHECK(report.violations == 0);
}

TEST_CASE("tape guards its contracts") {
  Tape t;
  Var c = t.constant(Tensor({2, 2}));
  CHECK_THROWS_AS(t.grad(c), std::invalid_argument);
  Var in = t.input(Tensor({2, 2}));
  CHECK_THROWS_AS(t.grad(in), std::logic_error);  // before backward
  CHECK_THROWS_AS(t.backward(in), std::invalid_argument);  // loss not scalar
  CHECK_THROWS_AS(t.scale_by(c, c), std::invalid_argument);
  CHECK(t.grad_or_zero(in).numel() == 4);
}
