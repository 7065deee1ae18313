#include "sattn/streaming.hpp"

#include <chrono>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "sattn/numerics.hpp"
#include "sattn/rng.hpp"

namespace sattn {

std::string to_string(Backend b) { return b == Backend::softmax ? "softmax" : "hybrid"; }

Backend backend_from_string(const std::string& s) {
  if (s == "softmax") return Backend::softmax;
  if (s == "hybrid") return Backend::hybrid;
  throw std::invalid_argument("backend must be 'softmax' or 'hybrid', got '" + s + "'");
}

void StreamConfig::validate() const {
  if (num_frames == 0 || tokens_per_frame == 0 || denoise_steps == 0 || hidden == 0 ||
      heads == 0) {
    throw std::invalid_argument("stream config: all sizes must be positive");
  }
  if (hidden % heads != 0) throw std::invalid_argument("stream config: heads must divide hidden");
  if (head_dim() % 2 != 0) {
    throw std::invalid_argument("stream config: head_dim must be even for rotary positions");
  }
  if (backend_per_layer.empty()) {
    throw std::invalid_argument("stream config: at least one layer required");
  }
  if (frames_per_chunk == 0 || num_frames % frames_per_chunk != 0) {
    throw std::invalid_argument("stream config: frames_per_chunk must divide num_frames");
  }
}

bool StreamConfig::dims_equal(const StreamConfig& other) const {
  return tokens_per_frame == other.tokens_per_frame && hidden == other.hidden &&
         heads == other.heads && precision == other.precision &&
         backend_per_layer == other.backend_per_layer && granularity == other.granularity &&
         frame_level_access == other.frame_level_access &&
         clean_pass_only == other.clean_pass_only && frames_per_chunk == other.frames_per_chunk;
}

void MetricsRecord::write_csv(std::ostream& os) const {
  os << "frame,layer,backend,pass_type,flops_macs,bytes,state_writes,wall_ns\n";
  for (const MetricRow& r : rows) {
    os << r.frame << ',' << r.layer << ',' << to_string(r.backend) << ','
       << (r.pass == PassType::noisy ? "noisy" : "clean") << ',' << r.macs << ',' << r.bytes
       << ',' << r.state_writes << ',' << r.wall_ns << '\n';
  }
}

bool MetricsRecord::deterministic_equal(const MetricsRecord& other) const {
  if (rows.size() != other.rows.size() || per_frame.size() != other.per_frame.size()) {
    return false;
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const MetricRow &a = rows[i], &b = other.rows[i];
    if (a.frame != b.frame || a.layer != b.layer || a.backend != b.backend || a.pass != b.pass ||
        a.macs != b.macs || a.bytes != b.bytes || a.state_writes != b.state_writes) {
      return false;
    }
  }
  for (std::size_t i = 0; i < per_frame.size(); ++i) {
    const FrameTotals &a = per_frame[i], &b = other.per_frame[i];
    if (a.frame != b.frame || a.cumulative_macs != b.cumulative_macs || a.bytes != b.bytes ||
        a.state_writes != b.state_writes) {
      return false;
    }
  }
  return true;
}

Tensor FeedForward::apply(const Tensor& x) const {
  return matmul(tanh_map(matmul(x, w1)), w2);
}

ToyModel ToyModel::build(const StreamConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.hidden, dff = 2 * cfg.hidden;
  ToyModel model;
  model.cfg = cfg;
  model.layers.reserve(cfg.num_layers());
  for (std::size_t l = 0; l < cfg.num_layers(); ++l) {
    Rng rng(Rng::derive_seed(cfg.seed, l));
    ProjectionSet proj = ProjectionSet::random(cfg.heads, cfg.head_dim(), rng, cfg.precision);
    HybridLayer attn(std::move(proj), cfg.granularity, cfg.precision);
    FeedForward ffn;
    ffn.w1 = scale(rng.gaussian_tensor({d, dff}, cfg.precision),
                   1.0 / std::sqrt(static_cast<double>(d)));
    ffn.w2 = scale(rng.gaussian_tensor({dff, d}, cfg.precision),
                   1.0 / std::sqrt(static_cast<double>(dff)));
    model.layers.push_back(
        {cfg.backend_per_layer[l], std::move(attn), KVCache(cfg.precision), std::move(ffn)});
  }
  Rng cond_rng(Rng::derive_seed(cfg.seed, cfg.num_layers()));
  model.cond = cond_rng.gaussian_tensor({d}, cfg.precision);
  return model;
}

void ToyModel::reset_runtime() {
  for (ToyLayer& layer : layers) {
    layer.cache.clear();
    layer.attn.reset_state();
  }
}

long ToyModel::stream_position() const {
  long pos = -1;
  for (const ToyLayer& layer : layers) {
    const long p = layer.backend == Backend::softmax
                       ? static_cast<long>(layer.cache.frames())
                       : layer.attn.state.last_clean_frame + 1;
    if (pos == -1) pos = p;
    if (p != pos) throw std::logic_error("toy model: layers disagree about the stream position");
  }
  return pos;
}

std::uint64_t ToyModel::weights_checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 0x100000001b3ull;
  };
  for (const ToyLayer& layer : layers) {
    mix(layer.attn.proj.checksum());
    mix(layer.ffn.w1.checksum());
    mix(layer.ffn.w2.checksum());
  }
  mix(cond.checksum());
  return h;
}

namespace {

std::uint64_t now_ns() {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(
          std::chrono::steady_clock::now().time_since_epoch())
          .count());
}

// Finds or creates the aggregation row for (frame, layer, pass).
MetricRow& row_for(MetricsRecord& metrics, std::size_t frame, std::size_t layer, Backend backend,
                   PassType pass) {
  for (auto it = metrics.rows.rbegin(); it != metrics.rows.rend(); ++it) {
    if (it->frame != frame) break;
    if (it->layer == layer && it->pass == pass) return *it;
  }
  metrics.rows.push_back(MetricRow{frame, layer, backend, pass, 0, 0, 0, 0});
  return metrics.rows.back();
}

}  // namespace

Tensor ToyModel::forward_pass(const Tensor& z, double t, long frame_index, PassType pass,
                              MetricsRecord* metrics, const Tensor* cond_override) {
  const std::size_t L = z.rows(), d = cfg.hidden, H = cfg.heads, D = cfg.head_dim();
  const Tensor& c = cond_override != nullptr ? *cond_override : cond;
  Tensor x = add_scalar(add_row_broadcast(z, c), t);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    ToyLayer& layer = layers[l];
    const std::uint64_t t0 = now_ns();
    const std::size_t history = layer.backend == Backend::softmax
                                    ? layer.cache.frames()
                                    : static_cast<std::size_t>(frame_index);
    Tensor attn_out;
    if (layer.backend == Backend::softmax) {
      attn_out = full_attention(x, layer.cache, layer.attn.proj);
    } else if (cfg.frame_level_access) {
      attn_out = layer.attn.forward(x, frame_index);
    } else {
      attn_out = layer.attn.forward_token_level(x, frame_index);
    }
    std::uint64_t macs = attention_pass_macs(layer.backend, L, d, H, D, history);

    if (pass == PassType::clean) {
      if (layer.backend == Backend::softmax) {
        append_clean_frame(layer.cache, x, layer.attn.proj);
      } else {
        layer.attn.absorb_clean_frame(x, frame_index);
        macs += state_update_macs(L, D, H);
      }
    } else if (layer.backend == Backend::hybrid && !cfg.clean_pass_only) {
      // Noisy-update ablation: the state is written on every denoise pass.
      layer.attn.write_state(x, frame_index);
      macs += state_update_macs(L, D, H);
    }

    if (metrics != nullptr) {
      MetricRow& row = row_for(*metrics, static_cast<std::size_t>(frame_index), l,
                               layer.backend, pass);
      row.macs += macs;
      row.bytes = layer.backend == Backend::softmax ? layer.cache.total_bytes()
                                                    : layer.attn.state.size_in_bytes();
      // Write count: state writes for hybrid layers, cache commits otherwise.
      row.state_writes = layer.backend == Backend::softmax
                             ? layer.cache.frames()
                             : layer.attn.state.write_count;
      row.wall_ns += now_ns() - t0;
    }

    x = add(x, attn_out);
    x = add(x, layer.ffn.apply(x));
  }
  return x;
}

GenerateResult generate(ToyModel& model, const StreamConfig& cfg) {
  cfg.validate();
  if (!cfg.dims_equal(model.cfg)) {
    throw std::invalid_argument("generate: model and config dimensions disagree");
  }
  model.reset_runtime();

  GenerateResult result;
  Rng rng(cfg.seed);
  const std::size_t L = cfg.block_tokens();
  const double dt = 1.0 / static_cast<double>(cfg.denoise_steps);
  std::uint64_t cumulative_macs = 0, cumulative_wall = 0;

  for (std::size_t block = 0; block < cfg.num_blocks(); ++block) {
    Tensor z = rng.gaussian_tensor({L, cfg.hidden}, cfg.precision);
    for (std::size_t step = 0; step < cfg.denoise_steps; ++step) {
      const double t = 1.0 - static_cast<double>(step) * dt;
      const Tensor v =
          model.forward_pass(z, t, static_cast<long>(block), PassType::noisy, &result.metrics);
      z = add(z, scale(v, dt));
      if (!z.all_finite()) {
        throw std::runtime_error("generate: non-finite latent at frame " +
                                 std::to_string(block) + ", step " + std::to_string(step));
      }
    }
    model.forward_pass(z, 0.0, static_cast<long>(block), PassType::clean, &result.metrics);
    result.frames.push_back(z);

    FrameTotals totals;
    totals.frame = block;
    std::uint64_t frame_macs = 0, frame_wall = 0, bytes = 0, writes = 0;
    for (const MetricRow& row : result.metrics.rows) {
      if (row.frame != block) continue;
      frame_macs += row.macs;
      frame_wall += row.wall_ns;
      if (row.pass == PassType::clean) bytes += row.bytes;
    }
    for (const ToyLayer& layer : model.layers) {
      writes += layer.backend == Backend::softmax ? layer.cache.frames()
                                                  : layer.attn.state.write_count;
    }
    cumulative_macs += frame_macs;
    cumulative_wall += frame_wall;
    totals.cumulative_macs = cumulative_macs;
    totals.bytes = bytes;
    totals.state_writes = writes;
    totals.cumulative_wall_ns = cumulative_wall;
    result.metrics.per_frame.push_back(totals);
  }
  return result;
}

std::uint64_t attention_pass_macs(Backend backend, std::size_t tokens, std::size_t model_dim,
                                  std::size_t heads, std::size_t head_dim,
                                  std::size_t history_frames) {
  const std::uint64_t L = tokens, d = model_dim, H = heads, D = head_dim;
  const std::uint64_t projections = 8 * L * d * d;
  if (backend == Backend::softmax) {
    const std::uint64_t window = history_frames * L + L;
    return 2 * L * window * D * H    // scores
           + 2 * L * window * D * H  // value mix
           + projections;
  }
  return 2 * L * L * D * H * 2     // intra scores and mix over the fixed window
         + 2 * L * D * D * H       // state query
         + 2 * L * D * D * H * 3   // feature maps
         + projections;
}

std::uint64_t state_update_macs(std::size_t tokens, std::size_t head_dim, std::size_t heads) {
  return 4 * static_cast<std::uint64_t>(tokens) * head_dim * head_dim * heads;
}

std::uint64_t memory_footprint(Backend backend, std::size_t tokens, std::size_t model_dim,
                               std::size_t heads, std::size_t head_dim,
                               std::size_t history_frames, Precision prec) {
  const std::uint64_t bytes = bytes_per_scalar(prec);
  if (backend == Backend::softmax) {
    return 2ull * history_frames * tokens * model_dim * bytes;
  }
  return static_cast<std::uint64_t>(heads) * head_dim * head_dim * bytes;
}

}  // namespace sattn
