#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sattn/hybrid_layer.hpp"
#include "sattn/tensor.hpp"

namespace sattn {

enum class Backend { softmax, hybrid };
std::string to_string(Backend b);
Backend backend_from_string(const std::string& s);

enum class PassType { noisy, clean };

struct StreamConfig {
  std::size_t num_frames = 4;
  std::size_t tokens_per_frame = 4;
  std::size_t denoise_steps = 4;
  std::size_t hidden = 16;
  std::size_t heads = 2;
  std::uint64_t seed = 0;
  Precision precision = Precision::f64;
  std::vector<Backend> backend_per_layer;
  GateGranularity granularity = GateGranularity::headwise;
  bool frame_level_access = true;
  bool clean_pass_only = true;
  /// Contiguous frames denoised together as one autoregressive block.
  std::size_t frames_per_chunk = 1;

  std::size_t head_dim() const { return hidden / heads; }
  std::size_t num_layers() const { return backend_per_layer.size(); }
  std::size_t block_tokens() const { return tokens_per_frame * frames_per_chunk; }
  std::size_t num_blocks() const { return num_frames / frames_per_chunk; }
  void validate() const;

  /// True when the structural fields (everything except num_frames,
  /// denoise_steps and seed) agree, i.e. a model built from one config can
  /// run the other.
  bool dims_equal(const StreamConfig& other) const;
};

/// One CSV row: a layer's aggregated noisy passes or its clean pass within
/// one frame. Cost unit is MACs (one multiply-add); bytes are the layer's
/// cache or state storage after the pass; state_writes is cumulative.
struct MetricRow {
  std::size_t frame = 0;
  std::size_t layer = 0;
  Backend backend = Backend::softmax;
  PassType pass = PassType::noisy;
  std::uint64_t macs = 0;
  std::uint64_t bytes = 0;
  std::uint64_t state_writes = 0;
  std::uint64_t wall_ns = 0;
};

struct FrameTotals {
  std::size_t frame = 0;
  std::uint64_t cumulative_macs = 0;   // all layers, all passes so far
  std::uint64_t bytes = 0;             // total cache+state bytes at frame end
  std::uint64_t state_writes = 0;      // cumulative over all layers
  std::uint64_t cumulative_wall_ns = 0;
};

struct MetricsRecord {
  std::vector<MetricRow> rows;
  std::vector<FrameTotals> per_frame;

  /// Header: frame,layer,backend,pass_type,flops_macs,bytes,state_writes,wall_ns
  void write_csv(std::ostream& os) const;
  /// Equality over every deterministic field (wall clock columns excluded).
  bool deterministic_equal(const MetricsRecord& other) const;
};

/// Simple two-layer feedforward with a tanh nonlinearity.
struct FeedForward {
  Tensor w1, w2;  // d-by-dff, dff-by-d
  Tensor apply(const Tensor& x) const;
};

struct ToyLayer {
  Backend backend = Backend::softmax;
  HybridLayer attn;  // holds the projections for both backends
  KVCache cache;
  FeedForward ffn;
};

/// Block-stacked toy denoiser. Identical seeds build identical weights no
/// matter which backends are selected, so backend comparisons share weights.
struct ToyModel {
  StreamConfig cfg;
  std::vector<ToyLayer> layers;
  Tensor cond;  // length-d conditioning vector, added row-wise to the input

  static ToyModel build(const StreamConfig& cfg);

  /// One full forward: embeds (z + cond + t), runs every layer
  /// (attention residual, then feedforward residual), returns the velocity.
  /// A clean pass additionally commits each layer's input to its cache or
  /// state after that layer's attention read. cond_override substitutes the
  /// model's conditioning vector when given.
  Tensor forward_pass(const Tensor& z, double t, long frame_index, PassType pass,
                      MetricsRecord* metrics, const Tensor* cond_override = nullptr);

  /// Index of the next frame to generate; throws if the layers' caches and
  /// states disagree about it.
  long stream_position() const;

  void reset_runtime();
  std::uint64_t weights_checksum() const;
};

struct GenerateResult {
  std::vector<Tensor> frames;
  MetricsRecord metrics;
};

/// Streams num_frames blocks: per block, seeded Gaussian noise is refined by
/// denoise_steps velocity updates on a uniform timestep schedule (state and
/// caches are only read), then one clean pass commits the result. Resets the
/// model's runtime stores first; deterministic under a fixed seed.
GenerateResult generate(ToyModel& model, const StreamConfig& cfg);

/// Cost model for one attention forward pass, in MACs. The softmax backend
/// charges scores and value mix over history plus the current frame, and
/// 8 L d^2 for the projections. The hybrid backend charges the fixed-window
/// intra pass, the state query, all three feature maps, and the same
/// projection term; it does not depend on history.
std::uint64_t attention_pass_macs(Backend backend, std::size_t tokens, std::size_t model_dim,
                                  std::size_t heads, std::size_t head_dim,
                                  std::size_t history_frames);

/// Extra MACs charged when a hybrid layer commits a frame to its state.
std::uint64_t state_update_macs(std::size_t tokens, std::size_t head_dim, std::size_t heads);

/// Bytes held by one layer's memory after history_frames committed frames:
/// the softmax cache grows linearly, the hybrid state is constant.
std::uint64_t memory_footprint(Backend backend, std::size_t tokens, std::size_t model_dim,
                               std::size_t heads, std::size_t head_dim,
                               std::size_t history_frames, Precision prec);

}  // namespace sattn
