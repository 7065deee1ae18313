#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "sattn/hybrid_layer.hpp"
#include "sattn/numerics.hpp"
#include "sattn/tensor.hpp"

namespace sattn::ad {

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
  bool valid() const { return id != static_cast<std::size_t>(-1); }
};

/// Reverse-mode tape. Every operation records its output value and a pull
/// rule that scatters the output cotangent to the parents; backward() walks
/// the tape once in reverse creation order. Forward values are computed with
/// the same kernels as the plain inference path, so a taped forward agrees
/// with the plain forward to roundoff.
///
/// The op set is closed: everything the distillation losses need (matrix
/// products, row softmax, row normalization, rotary positions, sigmoid/tanh,
/// slicing, gating) is expressed through the member functions below, each
/// with an exact hand-derived adjoint.
class Tape {
 public:
  Var input(Tensor value);     // leaf that receives a gradient
  Var constant(Tensor value);  // leaf without a gradient

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;
  /// Gradient of an input, or zeros when backward never reached it.
  Tensor grad_or_zero(Var v) const;

  /// Seeds d(loss)/d(loss) = 1 (loss must be a single element) and
  /// accumulates gradients into every reachable input.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var add_row_broadcast(Var m, Var row);
  Var sigmoid(Var a);
  Var tanh_op(Var a);
  Var softmax_rows(Var a);
  Var l2norm_rows(Var a);
  Var rope(Var a, std::vector<std::size_t> positions, double base = kRopeBase);
  Var transpose(Var a);
  Var reshape(Var a, std::vector<std::size_t> shape);
  Var slice_rows(Var a, std::size_t r0, std::size_t r1);
  Var slice_cols(Var a, std::size_t c0, std::size_t c1);
  Var concat_rows(const std::vector<Var>& parts);
  Var concat_cols(const std::vector<Var>& parts);
  /// 1-by-1 view of element (i, j) of a 2-d value.
  Var element(Var a, std::size_t i, std::size_t j);
  /// a scaled by a 1-by-1 tape value.
  Var scale_by(Var a, Var s);
  Var sum_all(Var a);
  Var expand_gate(Var g, GateGranularity granularity, std::size_t heads, std::size_t head_dim);

  /// Mean squared difference: sum((a-b)^2) / denom.
  Var mse(Var a, Var b, double denom);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool grad_live = false;
    std::function<void(Tape&, const Tensor&)> pull;  // scatter cotangent to parents
  };

  Var push(Tensor value, bool requires_grad, std::function<void(Tape&, const Tensor&)> pull);
  void accumulate(Var v, const Tensor& g);
  Node& node(Var v);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
};

}  // namespace sattn::ad
