#pragma once

#include <string>

#include "sattn/gdn.hpp"
#include "sattn/softmax_attn.hpp"
#include "sattn/tensor.hpp"

namespace sattn {

/// Per-head linear maps adapting the frozen projections to the recurrent
/// domain. Identity init keeps the layer a re-normalized copy of the frozen
/// projections at step zero.
struct FeatureMaps {
  Tensor phi_q, phi_k, phi_v;  // each H-by-D-by-D

  static FeatureMaps identity(std::size_t num_heads, std::size_t head_dim,
                              Precision prec = Precision::f64);
  void validate(std::size_t num_heads, std::size_t head_dim) const;
};

enum class GateGranularity { scalar, headwise, elementwise };

std::string to_string(GateGranularity g);
GateGranularity gate_granularity_from_string(const std::string& s);

/// Branch-fusion gate G = sigmoid(x W_g + b_g). The output width depends on
/// granularity: 1 (scalar), H (headwise), or H*D (elementwise). The bias is
/// zero by default, matching the bias-free form; a large negative bias turns
/// the recurrent branch off for the intra-only ablation.
struct GateParams {
  Tensor w_g, b_g;
  GateGranularity granularity = GateGranularity::headwise;

  static std::size_t width(GateGranularity g, std::size_t num_heads, std::size_t head_dim);
  static GateParams zeros(std::size_t model_dim, std::size_t num_heads, std::size_t head_dim,
                          GateGranularity g, Precision prec = Precision::f64);
  void validate(std::size_t model_dim, std::size_t num_heads, std::size_t head_dim) const;
};

/// Expands an L-by-width gate to L-by-(H*D) for the fuse product.
Tensor expand_gate(const Tensor& g, GateGranularity granularity, std::size_t num_heads,
                   std::size_t head_dim);

/// One hybrid attention layer: frozen softmax projections drive both the
/// intra-frame softmax branch and, through per-head feature maps, the
/// inter-frame recurrent branch. The two are fused by the sigmoid gate and
/// share the frozen output projection. The recurrent branch uses global
/// token positions; the intra branch is frame-local.
class HybridLayer {
 public:
  ProjectionSet proj;  // frozen; never touched by training
  FeatureMaps fmaps;
  GateParams gates;
  GatePredictors gate_pred;
  RecurrentState state;
  std::size_t chunk_size = kDefaultChunkSize;

  HybridLayer(ProjectionSet projections, GateGranularity granularity,
              Precision prec = Precision::f64);

  std::size_t num_heads() const { return proj.num_heads; }
  std::size_t head_dim() const { return proj.head_dim; }
  std::size_t model_dim() const { return proj.model_dim(); }

  /// Denoising-pass forward: every token reads the same pre-update state.
  /// Pure with respect to the state. Rejects a frame the state has already
  /// absorbed.
  Tensor forward(const Tensor& x, long frame_index) const;

  /// Ablation variant: token j reads a scratch state into which tokens
  /// 1..j-1 of the same frame have already been written. The persistent
  /// state is untouched.
  Tensor forward_token_level(const Tensor& x, long frame_index) const;

  /// Clean-pass commit: one chunkwise state write per frame, in order.
  void absorb_clean_frame(const Tensor& clean_frame, long frame_index);

  /// State write without the clean-pass bookkeeping; used by the
  /// noisy-update ablation.
  void write_state(const Tensor& x, long frame_index);

  void reset_state() { state.reset(); }

  /// Recurrent-branch queries Q' = l2norm(rope(phi_q(Q))) at global
  /// positions. L-by-H-by-D.
  Tensor inter_queries(const Tensor& x, long frame_index) const;

  /// O_inter = Q' S for the current state. L-by-H-by-D.
  Tensor inter_output(const Tensor& x, long frame_index) const;

  /// Gate activations sigmoid(x W_g + b_g), L-by-width.
  Tensor gate_activations(const Tensor& x) const;

  struct StateInputs {
    Tensor keys, values;  // L-by-H-by-D
    Tensor alpha, beta;   // L-by-H
  };
  /// K' = l2norm(rope(phi_k(K))), V' = phi_v(V), gates from the predictors;
  /// the raw material of a state write at the given frame.
  StateInputs state_inputs(const Tensor& x, long frame_index) const;

  void save(const std::string& path) const;
  static HybridLayer load(const std::string& path);

 private:
  Tensor fuse(const Tensor& x, const Tensor& o_intra, const Tensor& o_inter) const;
  void check_input(const Tensor& x) const;
};

}  // namespace sattn
