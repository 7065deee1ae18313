#pragma once

#include <cstdint>
#include <utility>

#include "sattn/tensor.hpp"

namespace sattn {

inline constexpr std::size_t kDefaultChunkSize = 16;

/// Fixed-size per-layer recurrent memory: one D-by-D matrix per head. Its
/// shape never changes no matter how many frames it absorbs.
struct RecurrentState {
  Tensor s;  // H-by-D-by-D
  long last_clean_frame = -1;
  std::uint64_t write_count = 0;

  RecurrentState(std::size_t num_heads, std::size_t head_dim, Precision prec = Precision::f64)
      : s({num_heads, head_dim, head_dim}, prec) {}

  std::size_t num_heads() const { return s.extent(0); }
  std::size_t head_dim() const { return s.extent(1); }
  std::size_t size_in_bytes() const { return s.size_in_bytes(); }
  std::uint64_t checksum() const { return s.checksum(); }

  void reset() {
    s = Tensor(s.shape(), s.precision());
    last_clean_frame = -1;
    write_count = 0;
  }
};

/// Per-head forget gate (alpha) and write strength (beta) predictors:
/// sigmoid(x w + b), one value per token per head. Default init retains by
/// default (b_alpha = +2, alpha ~ 0.88) and writes slowly (b_beta = -2,
/// beta ~ 0.12), with zero weights.
struct GatePredictors {
  Tensor w_alpha, b_alpha, w_beta, b_beta;  // d-by-H, H, d-by-H, H

  static GatePredictors init_default(std::size_t model_dim, std::size_t num_heads,
                                     Precision prec = Precision::f64);
  void validate(std::size_t model_dim, std::size_t num_heads) const;
};

/// alpha = sigmoid(x w_alpha + b_alpha), beta likewise. Both L-by-H.
std::pair<Tensor, Tensor> predict_gates(const Tensor& x, const GatePredictors& gp);

/// Applies the gated delta update token by token, heads independent:
///   S <- alpha * S + beta * k^T (v - k S)
/// for tokens j = 1..L in order. Keys are expected row-normalized per head
/// (norm 1 or exactly 0; a zero key decays the state and writes nothing).
/// One call absorbs one frame: write_count increments by exactly 1.
void update_sequential(RecurrentState& state, const Tensor& keys, const Tensor& values,
                       const Tensor& alpha, const Tensor& beta);

/// Same recurrence evaluated in blocks of chunk_size. Within a chunk the
/// token interactions are materialized as a unit-lower-triangular system and
/// solved by forward substitution; chunks are stitched through the carried
/// state. Final state matches update_sequential up to roundoff.
void update_chunkwise(RecurrentState& state, const Tensor& keys, const Tensor& values,
                      const Tensor& alpha, const Tensor& beta, std::size_t chunk_size);

/// O[i] = q_i S per head; read-only, every token sees the identical state.
/// queries and result are L-by-H-by-D.
Tensor query_state(const RecurrentState& state, const Tensor& queries);

}  // namespace sattn
