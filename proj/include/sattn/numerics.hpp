#pragma once

#include <vector>

#include "sattn/tensor.hpp"

namespace sattn {

/// Rows whose Euclidean norm falls below this are normalized to the zero row
/// instead of being divided by a near-zero norm.
inline constexpr double kEpsNorm = 1e-12;

/// Rotary embedding frequency base.
inline constexpr double kRopeBase = 10000.0;

/// C = A * B with a fixed summation order (k ascending per output element),
/// so results are bit-reproducible per precision.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

/// m-by-n plus a length-n (or 1-by-n) row, broadcast over rows.
Tensor add_row_broadcast(const Tensor& m, const Tensor& row);

/// Adds a scalar to every element.
Tensor add_scalar(const Tensor& a, double c);

Tensor sigmoid(const Tensor& a);
Tensor tanh_map(const Tensor& a);

/// Row softmax, stabilized by row-max subtraction. The masked overload takes
/// an additive mask whose entries are 0 or -infinity; masked entries map to
/// exactly 0. A fully masked row is an error.
Tensor softmax_rows(const Tensor& x);
Tensor softmax_rows(const Tensor& x, const Tensor& mask);

/// Normalizes each row to unit Euclidean norm; rows below kEpsNorm become
/// the zero row.
Tensor l2norm_rows(const Tensor& x);

/// Rotary position embedding on rows of even width D: coordinate pair
/// (x[2i], x[2i+1]) is rotated by angle pos * base^(-2i/D). Norm-preserving;
/// position 0 is the identity.
Tensor rope(const Tensor& x, const std::vector<std::size_t>& positions,
            double base = kRopeBase);

/// Inverse rotation (rope at negated angles); the adjoint of rope.
Tensor rope_inverse(const Tensor& x, const std::vector<std::size_t>& positions,
                    double base = kRopeBase);

/// Splits an m-by-(H*D) matrix into H per-head m-by-D matrices and back.
/// Because row-major [m, H*D] and [m, H, D] share a flat layout, these also
/// serve tensors carrying a per-head axis.
std::vector<Tensor> split_heads(const Tensor& x, std::size_t num_heads, std::size_t head_dim);
Tensor merge_heads(const std::vector<Tensor>& heads);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t r1);
Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1);

double frobenius_norm_sq(const Tensor& a);

}  // namespace sattn
