#include "sattn/hybrid_layer.hpp"

#include <stdexcept>

#include "sattn/numerics.hpp"
#include "sattn/serialize.hpp"

namespace sattn {

FeatureMaps FeatureMaps::identity(std::size_t num_heads, std::size_t head_dim, Precision prec) {
  FeatureMaps fm;
  for (Tensor* t : {&fm.phi_q, &fm.phi_k, &fm.phi_v}) {
    Tensor blocks({num_heads, head_dim, head_dim}, prec);
    for (std::size_t h = 0; h < num_heads; ++h) {
      for (std::size_t i = 0; i < head_dim; ++i) blocks.set(h, i, i, 1.0);
    }
    *t = std::move(blocks);
  }
  return fm;
}

void FeatureMaps::validate(std::size_t num_heads, std::size_t head_dim) const {
  for (const Tensor* t : {&phi_q, &phi_k, &phi_v}) {
    if (t->ndim() != 3 || t->extent(0) != num_heads || t->extent(1) != head_dim ||
        t->extent(2) != head_dim) {
      throw std::invalid_argument("feature maps: expected H-by-D-by-D blocks");
    }
    if (!t->all_finite()) throw std::invalid_argument("feature maps: non-finite entry");
  }
}

std::string to_string(GateGranularity g) {
  switch (g) {
    case GateGranularity::scalar: return "scalar";
    case GateGranularity::headwise: return "headwise";
    case GateGranularity::elementwise: return "elementwise";
  }
  throw std::logic_error("unknown gate granularity");
}

GateGranularity gate_granularity_from_string(const std::string& s) {
  if (s == "scalar") return GateGranularity::scalar;
  if (s == "headwise") return GateGranularity::headwise;
  if (s == "elementwise") return GateGranularity::elementwise;
  throw std::invalid_argument("gate granularity must be scalar, headwise or elementwise");
}

std::size_t GateParams::width(GateGranularity g, std::size_t num_heads, std::size_t head_dim) {
  switch (g) {
    case GateGranularity::scalar: return 1;
    case GateGranularity::headwise: return num_heads;
    case GateGranularity::elementwise: return num_heads * head_dim;
  }
  throw std::logic_error("unknown gate granularity");
}

GateParams GateParams::zeros(std::size_t model_dim, std::size_t num_heads, std::size_t head_dim,
                             GateGranularity g, Precision prec) {
  GateParams gp;
  gp.granularity = g;
  const std::size_t w = width(g, num_heads, head_dim);
  gp.w_g = Tensor({model_dim, w}, prec);
  gp.b_g = Tensor({w}, prec);
  return gp;
}

void GateParams::validate(std::size_t model_dim, std::size_t num_heads,
                          std::size_t head_dim) const {
  const std::size_t w = width(granularity, num_heads, head_dim);
  if (w_g.ndim() != 2 || w_g.rows() != model_dim || w_g.cols() != w) {
    throw std::invalid_argument("gate params: weight must be d-by-width");
  }
  if (b_g.numel() != w) throw std::invalid_argument("gate params: bias width mismatch");
}

Tensor expand_gate(const Tensor& g, GateGranularity granularity, std::size_t num_heads,
                   std::size_t head_dim) {
  const std::size_t rows = g.rows(), d = num_heads * head_dim;
  if (g.cols() != GateParams::width(granularity, num_heads, head_dim)) {
    throw std::invalid_argument("expand_gate: gate width does not match granularity");
  }
  if (granularity == GateGranularity::elementwise) return g;
  std::vector<double> out(rows * d);
  auto gv = g.values();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t h = 0; h < num_heads; ++h) {
      const double value =
          granularity == GateGranularity::scalar ? gv[i] : gv[i * num_heads + h];
      for (std::size_t j = 0; j < head_dim; ++j) out[i * d + h * head_dim + j] = value;
    }
  }
  return Tensor::from({rows, d}, std::move(out), g.precision());
}

HybridLayer::HybridLayer(ProjectionSet projections, GateGranularity granularity, Precision prec)
    : proj(std::move(projections)),
      fmaps(FeatureMaps::identity(proj.num_heads, proj.head_dim, prec)),
      gates(GateParams::zeros(proj.model_dim(), proj.num_heads, proj.head_dim, granularity, prec)),
      gate_pred(GatePredictors::init_default(proj.model_dim(), proj.num_heads, prec)),
      state(proj.num_heads, proj.head_dim, prec) {
  proj.validate();
}

void HybridLayer::check_input(const Tensor& x) const {
  if (x.ndim() != 2 || x.cols() != model_dim()) {
    throw std::invalid_argument("hybrid layer: input width must equal model dim");
  }
}

namespace {

// phi applied per head: rows of x_h (L-by-D) times the head's D-by-D block.
Tensor apply_feature_map(const Tensor& x_heads_flat, const Tensor& blocks, std::size_t num_heads,
                         std::size_t head_dim) {
  const auto heads = split_heads(x_heads_flat, num_heads, head_dim);
  std::vector<Tensor> mapped;
  mapped.reserve(num_heads);
  auto bv = blocks.values();
  for (std::size_t h = 0; h < num_heads; ++h) {
    std::vector<double> blk(bv.begin() + h * head_dim * head_dim,
                            bv.begin() + (h + 1) * head_dim * head_dim);
    mapped.push_back(
        matmul(heads[h], Tensor::from({head_dim, head_dim}, std::move(blk), blocks.precision())));
  }
  return merge_heads(mapped);
}

}  // namespace

Tensor HybridLayer::inter_queries(const Tensor& x, long frame_index) const {
  check_input(x);
  const std::size_t L = x.rows(), H = num_heads(), D = head_dim();
  const Tensor q = matmul(x, proj.w_q);
  const Tensor mapped = apply_feature_map(q, fmaps.phi_q, H, D);
  const auto pos = global_positions(static_cast<std::size_t>(frame_index), L);
  std::vector<Tensor> heads = split_heads(mapped, H, D);
  for (auto& head : heads) head = l2norm_rows(rope(head, pos));
  return merge_heads(heads).reshaped({L, H, D});
}

Tensor HybridLayer::inter_output(const Tensor& x, long frame_index) const {
  return query_state(state, inter_queries(x, frame_index));
}

Tensor HybridLayer::gate_activations(const Tensor& x) const {
  check_input(x);
  gates.validate(model_dim(), num_heads(), head_dim());
  return sigmoid(add_row_broadcast(matmul(x, gates.w_g), gates.b_g));
}

Tensor HybridLayer::fuse(const Tensor& x, const Tensor& o_intra, const Tensor& o_inter) const {
  const std::size_t L = x.rows(), d = model_dim();
  const Tensor gate = expand_gate(gate_activations(x), gates.granularity, num_heads(), head_dim());
  const Tensor fused = add(o_intra.reshaped({L, d}),
                           hadamard(gate, o_inter.reshaped({L, d})));
  return matmul(fused, proj.w_o);
}

Tensor HybridLayer::forward(const Tensor& x, long frame_index) const {
  check_input(x);
  if (state.last_clean_frame >= frame_index) {
    throw std::invalid_argument("hybrid forward: frame " + std::to_string(frame_index) +
                                " already absorbed into the state");
  }
  const Tensor o_intra = intra_attention(x, proj);
  const Tensor o_inter = inter_output(x, frame_index);
  return fuse(x, o_intra, o_inter);
}

HybridLayer::StateInputs HybridLayer::state_inputs(const Tensor& x, long frame_index) const {
  check_input(x);
  fmaps.validate(num_heads(), head_dim());
  const std::size_t L = x.rows(), H = num_heads(), D = head_dim();
  const auto pos = global_positions(static_cast<std::size_t>(frame_index), L);

  const Tensor k = apply_feature_map(matmul(x, proj.w_k), fmaps.phi_k, H, D);
  std::vector<Tensor> k_heads = split_heads(k, H, D);
  for (auto& head : k_heads) head = l2norm_rows(rope(head, pos));

  const Tensor v = apply_feature_map(matmul(x, proj.w_v), fmaps.phi_v, H, D);
  auto [alpha, beta] = predict_gates(x, gate_pred);

  return {merge_heads(k_heads).reshaped({L, H, D}), v.reshaped({L, H, D}),
          std::move(alpha), std::move(beta)};
}

Tensor HybridLayer::forward_token_level(const Tensor& x, long frame_index) const {
  check_input(x);
  if (state.last_clean_frame >= frame_index) {
    throw std::invalid_argument("hybrid forward: frame " + std::to_string(frame_index) +
                                " already absorbed into the state");
  }
  const std::size_t L = x.rows(), H = num_heads(), D = head_dim();
  const Tensor o_intra = intra_attention(x, proj);
  const Tensor queries = inter_queries(x, frame_index);
  const StateInputs si = state_inputs(x, frame_index);

  // Interleave query and write on a scratch copy; the persistent state is
  // never touched.
  RecurrentState scratch(H, D, state.s.precision());
  scratch.s = state.s;
  Tensor o_inter({L, H, D}, x.precision());
  for (std::size_t j = 0; j < L; ++j) {
    const Tensor qj = slice_rows(queries.reshaped({L, H * D}), j, j + 1).reshaped({1, H, D});
    const Tensor oj = query_state(scratch, qj);
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t c = 0; c < D; ++c) o_inter.set(j, h, c, oj.at(0, h, c));
    }
    const Tensor kj = slice_rows(si.keys.reshaped({L, H * D}), j, j + 1).reshaped({1, H, D});
    const Tensor vj = slice_rows(si.values.reshaped({L, H * D}), j, j + 1).reshaped({1, H, D});
    update_sequential(scratch, kj, vj, slice_rows(si.alpha, j, j + 1),
                      slice_rows(si.beta, j, j + 1));
  }
  return fuse(x, o_intra, o_inter);
}

void HybridLayer::absorb_clean_frame(const Tensor& clean_frame, long frame_index) {
  if (frame_index != state.last_clean_frame + 1) {
    throw std::invalid_argument("absorb_clean_frame: expected frame " +
                                std::to_string(state.last_clean_frame + 1) + ", got " +
                                std::to_string(frame_index));
  }
  write_state(clean_frame, frame_index);
  state.last_clean_frame = frame_index;
}

void HybridLayer::write_state(const Tensor& x, long frame_index) {
  const StateInputs si = state_inputs(x, frame_index);
  update_chunkwise(state, si.keys, si.values, si.alpha, si.beta, chunk_size);
}

void HybridLayer::save(const std::string& path) const {
  write_tensor_blob(path, {
      {"w_q", proj.w_q}, {"w_k", proj.w_k}, {"w_v", proj.w_v}, {"w_o", proj.w_o},
      {"phi_q", fmaps.phi_q}, {"phi_k", fmaps.phi_k}, {"phi_v", fmaps.phi_v},
      {"w_g", gates.w_g}, {"b_g", gates.b_g},
      {"gate_granularity",
       Tensor::from({1}, {static_cast<double>(static_cast<int>(gates.granularity))})},
      {"w_alpha", gate_pred.w_alpha}, {"b_alpha", gate_pred.b_alpha},
      {"w_beta", gate_pred.w_beta}, {"b_beta", gate_pred.b_beta},
  });
}

HybridLayer HybridLayer::load(const std::string& path) {
  auto tensors = read_tensor_blob(path);
  auto find = [&](const std::string& name) -> Tensor& {
    for (auto& [n, t] : tensors) {
      if (n == name) return t;
    }
    throw std::runtime_error("hybrid layer blob: missing tensor '" + name + "'");
  };
  Tensor& phi_q = find("phi_q");
  const std::size_t H = phi_q.extent(0), D = phi_q.extent(1);
  ProjectionSet proj;
  proj.num_heads = H;
  proj.head_dim = D;
  proj.w_q = find("w_q");
  proj.w_k = find("w_k");
  proj.w_v = find("w_v");
  proj.w_o = find("w_o");
  const auto granularity =
      static_cast<GateGranularity>(static_cast<int>(find("gate_granularity").at(0)));
  HybridLayer layer(std::move(proj), granularity, phi_q.precision());
  layer.fmaps.phi_q = phi_q;
  layer.fmaps.phi_k = find("phi_k");
  layer.fmaps.phi_v = find("phi_v");
  layer.gates.w_g = find("w_g");
  layer.gates.b_g = find("b_g");
  layer.gate_pred.w_alpha = find("w_alpha");
  layer.gate_pred.b_alpha = find("b_alpha");
  layer.gate_pred.w_beta = find("w_beta");
  layer.gate_pred.b_beta = find("b_beta");
  layer.fmaps.validate(H, D);
  layer.gates.validate(layer.model_dim(), H, D);
  return layer;
}

}  // namespace sattn
