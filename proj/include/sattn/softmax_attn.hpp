#pragma once

#include <cstdint>
#include <vector>

#include "sattn/numerics.hpp"
#include "sattn/rng.hpp"
#include "sattn/tensor.hpp"

namespace sattn {

/// Frozen q/k/v/output projections of one attention layer.
struct ProjectionSet {
  Tensor w_q, w_k, w_v, w_o;  // each d-by-d
  std::size_t num_heads = 1;
  std::size_t head_dim = 1;

  std::size_t model_dim() const { return num_heads * head_dim; }

  /// Gaussian init with standard deviation 1/sqrt(d).
  static ProjectionSet random(std::size_t num_heads, std::size_t head_dim, Rng& rng,
                              Precision prec = Precision::f64);

  void validate() const;
  std::uint64_t checksum() const;
};

/// Growing per-layer store of past keys and values, one entry per committed
/// frame. Keys are stored post-rotation at their global positions, so replay
/// and streaming agree bitwise. Single-writer; appends must not race reads.
class KVCache {
 public:
  explicit KVCache(Precision prec = Precision::f64) : prec_(prec) {}

  std::size_t frames() const { return entries_.size(); }
  std::size_t tokens_per_frame() const;
  std::uint64_t total_bytes() const;
  Precision precision() const { return prec_; }

  const Tensor& keys(std::size_t frame) const;
  const Tensor& values(std::size_t frame) const;

  void append(Tensor keys, Tensor values);
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    Tensor k, v;
  };
  std::vector<Entry> entries_;
  Precision prec_;
};

/// Global token positions for a frame: frame_index * L + 0..L-1.
std::vector<std::size_t> global_positions(std::size_t frame_index, std::size_t tokens);

std::vector<std::size_t> local_positions(std::size_t tokens);

/// Block-causal softmax attention for the frame being generated: every token
/// attends bidirectionally within the frame and to all cached frames. Scores
/// scale by 1/sqrt(head_dim); rotary positions are global; the output
/// projection is applied. Returns L-by-d.
Tensor full_attention(const Tensor& x, const KVCache& cache, const ProjectionSet& proj);

/// Bidirectional softmax attention over the current frame only, at
/// frame-local positions, before the output projection. Returns L-by-H-by-D.
Tensor intra_attention(const Tensor& x, const ProjectionSet& proj);

/// Commits a clean frame: appends its rotated keys and raw values.
void append_clean_frame(KVCache& cache, const Tensor& clean_frame, const ProjectionSet& proj);

/// Additive block-causal mask over num_frames * L tokens: 0 where token p may
/// attend token q (same frame or earlier frame), -inf otherwise. Used by the
/// dense-replay oracle in tests.
Tensor block_causal_mask(std::size_t num_frames, std::size_t tokens_per_frame);

}  // namespace sattn
