#include "sattn/softmax_attn.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace sattn {

ProjectionSet ProjectionSet::random(std::size_t num_heads, std::size_t head_dim, Rng& rng,
                                    Precision prec) {
  ProjectionSet p;
  p.num_heads = num_heads;
  p.head_dim = head_dim;
  const std::size_t d = num_heads * head_dim;
  const double std_dev = 1.0 / std::sqrt(static_cast<double>(d));
  for (Tensor* w : {&p.w_q, &p.w_k, &p.w_v, &p.w_o}) {
    *w = rng.gaussian_tensor({d, d}, prec);
    *w = scale(*w, std_dev);
  }
  return p;
}

void ProjectionSet::validate() const {
  const std::size_t d = model_dim();
  if (num_heads == 0 || head_dim == 0) {
    throw std::invalid_argument("projections: heads and head_dim must be positive");
  }
  for (const Tensor* w : {&w_q, &w_k, &w_v, &w_o}) {
    if (w->ndim() != 2 || w->rows() != d || w->cols() != d) {
      throw std::invalid_argument("projections: weights must be d-by-d with d = heads*head_dim");
    }
    if (!w->all_finite()) throw std::invalid_argument("projections: non-finite weight");
  }
}

std::uint64_t ProjectionSet::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const Tensor* w : {&w_q, &w_k, &w_v, &w_o}) {
    h ^= w->checksum();
    h *= 0x100000001b3ull;
  }
  return h;
}

std::size_t KVCache::tokens_per_frame() const {
  return entries_.empty() ? 0 : entries_.front().k.rows();
}

std::uint64_t KVCache::total_bytes() const {
  std::uint64_t bytes = 0;
  for (const Entry& e : entries_) bytes += e.k.size_in_bytes() + e.v.size_in_bytes();
  return bytes;
}

const Tensor& KVCache::keys(std::size_t frame) const {
  if (frame >= entries_.size()) throw std::out_of_range("kv cache: frame out of range");
  return entries_[frame].k;
}

const Tensor& KVCache::values(std::size_t frame) const {
  if (frame >= entries_.size()) throw std::out_of_range("kv cache: frame out of range");
  return entries_[frame].v;
}

void KVCache::append(Tensor keys, Tensor values) {
  if (keys.ndim() != 2 || values.ndim() != 2 || !keys.same_shape(values)) {
    throw std::invalid_argument("kv cache: keys and values must be matching 2-d tensors");
  }
  if (!entries_.empty() && (keys.rows() != tokens_per_frame() ||
                            keys.cols() != entries_.front().k.cols())) {
    throw std::invalid_argument("kv cache: frame shape differs from cached frames");
  }
  entries_.push_back({keys.with_precision(prec_), values.with_precision(prec_)});
}

std::vector<std::size_t> global_positions(std::size_t frame_index, std::size_t tokens) {
  std::vector<std::size_t> pos(tokens);
  for (std::size_t i = 0; i < tokens; ++i) pos[i] = frame_index * tokens + i;
  return pos;
}

std::vector<std::size_t> local_positions(std::size_t tokens) {
  std::vector<std::size_t> pos(tokens);
  for (std::size_t i = 0; i < tokens; ++i) pos[i] = i;
  return pos;
}

namespace {

// Shared per-head score/mix pipeline. Keeping one code path here is what
// makes the empty-cache case of full_attention bitwise equal to
// intra_attention.
Tensor attend_head(const Tensor& q_roped, const Tensor& k_all, const Tensor& v_all,
                   std::size_t head_dim) {
  Tensor scores = scale(matmul(q_roped, transpose(k_all)),
                        1.0 / std::sqrt(static_cast<double>(head_dim)));
  Tensor probs = softmax_rows(scores);
  return matmul(probs, v_all);
}

}  // namespace

Tensor full_attention(const Tensor& x, const KVCache& cache, const ProjectionSet& proj) {
  proj.validate();
  const std::size_t d = proj.model_dim();
  if (x.ndim() != 2 || x.cols() != d) {
    throw std::invalid_argument("full_attention: input width must equal model dim");
  }
  const std::size_t tokens = x.rows();
  if (cache.frames() > 0 && cache.tokens_per_frame() != tokens) {
    throw std::invalid_argument("full_attention: cached frame length differs from input");
  }
  const std::size_t frame_index = cache.frames();

  const Tensor q = matmul(x, proj.w_q);
  const Tensor k = matmul(x, proj.w_k);
  const Tensor v = matmul(x, proj.w_v);
  const auto pos = global_positions(frame_index, tokens);

  std::vector<Tensor> out_heads;
  out_heads.reserve(proj.num_heads);
  for (std::size_t h = 0; h < proj.num_heads; ++h) {
    const std::size_t c0 = h * proj.head_dim, c1 = c0 + proj.head_dim;
    const Tensor qh = rope(slice_cols(q, c0, c1), pos);
    const Tensor kh = rope(slice_cols(k, c0, c1), pos);

    std::vector<Tensor> k_parts, v_parts;
    k_parts.reserve(frame_index + 1);
    v_parts.reserve(frame_index + 1);
    for (std::size_t f = 0; f < frame_index; ++f) {
      k_parts.push_back(slice_cols(cache.keys(f), c0, c1));
      v_parts.push_back(slice_cols(cache.values(f), c0, c1));
    }
    k_parts.push_back(kh);
    v_parts.push_back(slice_cols(v, c0, c1));

    out_heads.push_back(
        attend_head(qh, concat_rows(k_parts), concat_rows(v_parts), proj.head_dim));
  }
  return matmul(merge_heads(out_heads), proj.w_o);
}

Tensor intra_attention(const Tensor& x, const ProjectionSet& proj) {
  proj.validate();
  const std::size_t d = proj.model_dim();
  if (x.ndim() != 2 || x.cols() != d) {
    throw std::invalid_argument("intra_attention: input width must equal model dim");
  }
  const std::size_t tokens = x.rows();

  const Tensor q = matmul(x, proj.w_q);
  const Tensor k = matmul(x, proj.w_k);
  const Tensor v = matmul(x, proj.w_v);
  const auto pos = local_positions(tokens);

  std::vector<Tensor> out_heads;
  out_heads.reserve(proj.num_heads);
  for (std::size_t h = 0; h < proj.num_heads; ++h) {
    const std::size_t c0 = h * proj.head_dim, c1 = c0 + proj.head_dim;
    const Tensor qh = rope(slice_cols(q, c0, c1), pos);
    const Tensor kh = rope(slice_cols(k, c0, c1), pos);
    // Single concat_rows keeps this path bit-identical to full_attention on
    // an empty cache.
    out_heads.push_back(attend_head(qh, concat_rows({kh}),
                                    concat_rows({slice_cols(v, c0, c1)}), proj.head_dim));
  }
  return merge_heads(out_heads).reshaped({tokens, proj.num_heads, proj.head_dim});
}

void append_clean_frame(KVCache& cache, const Tensor& clean_frame, const ProjectionSet& proj) {
  proj.validate();
  if (clean_frame.ndim() != 2 || clean_frame.cols() != proj.model_dim()) {
    throw std::invalid_argument("append_clean_frame: frame width must equal model dim");
  }
  const std::size_t tokens = clean_frame.rows();
  const auto pos = global_positions(cache.frames(), tokens);

  const Tensor k = matmul(clean_frame, proj.w_k);
  std::vector<Tensor> k_heads;
  k_heads.reserve(proj.num_heads);
  for (std::size_t h = 0; h < proj.num_heads; ++h) {
    const std::size_t c0 = h * proj.head_dim, c1 = c0 + proj.head_dim;
    k_heads.push_back(rope(slice_cols(k, c0, c1), pos));
  }
  cache.append(merge_heads(k_heads), matmul(clean_frame, proj.w_v));
}

Tensor block_causal_mask(std::size_t num_frames, std::size_t tokens_per_frame) {
  const std::size_t n = num_frames * tokens_per_frame;
  Tensor mask({n, n});
  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t fp = p / tokens_per_frame;
    for (std::size_t q = 0; q < n; ++q) {
      const std::size_t fq = q / tokens_per_frame;
      if (fq > fp) mask.set(p, q, neg_inf);
    }
  }
  return mask;
}

}  // namespace sattn
