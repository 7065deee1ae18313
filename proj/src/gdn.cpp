#include "sattn/gdn.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "sattn/numerics.hpp"

namespace sattn {

GatePredictors GatePredictors::init_default(std::size_t model_dim, std::size_t num_heads,
                                            Precision prec) {
  GatePredictors gp;
  gp.w_alpha = Tensor({model_dim, num_heads}, prec);
  gp.w_beta = Tensor({model_dim, num_heads}, prec);
  gp.b_alpha = Tensor::full({num_heads}, 2.0, prec);
  gp.b_beta = Tensor::full({num_heads}, -2.0, prec);
  return gp;
}

void GatePredictors::validate(std::size_t model_dim, std::size_t num_heads) const {
  for (const Tensor* w : {&w_alpha, &w_beta}) {
    if (w->ndim() != 2 || w->rows() != model_dim || w->cols() != num_heads) {
      throw std::invalid_argument("gate predictors: weight must be d-by-H");
    }
  }
  for (const Tensor* b : {&b_alpha, &b_beta}) {
    if (b->numel() != num_heads) throw std::invalid_argument("gate predictors: bias must be H");
  }
}

std::pair<Tensor, Tensor> predict_gates(const Tensor& x, const GatePredictors& gp) {
  gp.validate(x.cols(), gp.w_alpha.cols());
  Tensor alpha = sigmoid(add_row_broadcast(matmul(x, gp.w_alpha), gp.b_alpha));
  Tensor beta = sigmoid(add_row_broadcast(matmul(x, gp.w_beta), gp.b_beta));
  return {std::move(alpha), std::move(beta)};
}

namespace {

struct FrameInputs {
  std::size_t tokens, heads, dim;
  const double* keys;
  const double* values;
  const double* alpha;
  const double* beta;
};

FrameInputs check_frame_inputs(const RecurrentState& state, const Tensor& keys,
                               const Tensor& values, const Tensor& alpha, const Tensor& beta) {
  const std::size_t heads = state.num_heads(), dim = state.head_dim();
  if (keys.ndim() != 3 || keys.extent(1) != heads || keys.extent(2) != dim) {
    throw std::invalid_argument("gdn update: keys must be L-by-H-by-D matching the state");
  }
  if (!values.same_shape(keys)) throw std::invalid_argument("gdn update: values shape mismatch");
  const std::size_t tokens = keys.extent(0);
  if (alpha.ndim() != 2 || alpha.rows() != tokens || alpha.cols() != heads ||
      !beta.same_shape(alpha)) {
    throw std::invalid_argument("gdn update: gates must be L-by-H");
  }
  return {tokens, heads, dim,
          keys.values().data(), values.values().data(),
          alpha.values().data(), beta.values().data()};
}

void commit(RecurrentState& state, const std::vector<double>& s_new, const char* op) {
  Tensor next = Tensor::from(state.s.shape(), std::vector<double>(s_new), state.s.precision());
  if (!next.all_finite()) {
    throw std::runtime_error(std::string(op) + ": state became non-finite (gate or weight blow-up)");
  }
  state.s = std::move(next);
  state.write_count += 1;
}

}  // namespace

void update_sequential(RecurrentState& state, const Tensor& keys, const Tensor& values,
                       const Tensor& alpha, const Tensor& beta) {
  const FrameInputs in = check_frame_inputs(state, keys, values, alpha, beta);
  const std::size_t H = in.heads, D = in.dim, L = in.tokens;

  std::vector<double> s(state.s.values().begin(), state.s.values().end());
  std::vector<double> ks(D);
  for (std::size_t h = 0; h < H; ++h) {
    double* sh = s.data() + h * D * D;
    for (std::size_t j = 0; j < L; ++j) {
      const double a = in.alpha[j * H + h];
      const double b = in.beta[j * H + h];
      const double* k = in.keys + (j * H + h) * D;
      const double* v = in.values + (j * H + h) * D;
      // ks = k S
      for (std::size_t c = 0; c < D; ++c) {
        double acc = 0.0;
        for (std::size_t r = 0; r < D; ++r) acc += k[r] * sh[r * D + c];
        ks[c] = acc;
      }
      // S = a S + b k^T (v - ks)
      for (std::size_t r = 0; r < D; ++r) {
        const double bk = b * k[r];
        for (std::size_t c = 0; c < D; ++c) {
          sh[r * D + c] = a * sh[r * D + c] + bk * (v[c] - ks[c]);
        }
      }
    }
  }
  commit(state, s, "update_sequential");
}

void update_chunkwise(RecurrentState& state, const Tensor& keys, const Tensor& values,
                      const Tensor& alpha, const Tensor& beta, std::size_t chunk_size) {
  if (chunk_size == 0) throw std::invalid_argument("gdn update: chunk_size must be positive");
  const FrameInputs in = check_frame_inputs(state, keys, values, alpha, beta);
  const std::size_t H = in.heads, D = in.dim, L = in.tokens;

  std::vector<double> s(state.s.values().begin(), state.s.values().end());
  // decay[j][i] = product of alpha over local tokens (i, j]; decay[i][i] = 1.
  std::vector<double> decay((chunk_size + 1) * (chunk_size + 1));
  std::vector<double> ks0(chunk_size * D), u(chunk_size * D), m(chunk_size * chunk_size);

  for (std::size_t h = 0; h < H; ++h) {
    double* sh = s.data() + h * D * D;
    for (std::size_t c0 = 0; c0 < L; c0 += chunk_size) {
      const std::size_t c = std::min(chunk_size, L - c0);
      const std::size_t stride = chunk_size + 1;
      auto key_row = [&](std::size_t t) { return in.keys + ((c0 + t) * H + h) * D; };
      auto val_row = [&](std::size_t t) { return in.values + ((c0 + t) * H + h) * D; };
      auto gate_a = [&](std::size_t t) { return in.alpha[(c0 + t) * H + h]; };
      auto gate_b = [&](std::size_t t) { return in.beta[(c0 + t) * H + h]; };

      for (std::size_t i = 0; i <= c; ++i) {
        decay[i * stride + i] = 1.0;
        for (std::size_t j = i + 1; j <= c; ++j) {
          decay[j * stride + i] = decay[(j - 1) * stride + i] * gate_a(j - 1);
        }
      }

      // ks0 = K S (interaction of each key with the incoming state)
      for (std::size_t t = 0; t < c; ++t) {
        const double* k = key_row(t);
        for (std::size_t col = 0; col < D; ++col) {
          double acc = 0.0;
          for (std::size_t r = 0; r < D; ++r) acc += k[r] * sh[r * D + col];
          ks0[t * D + col] = acc;
        }
      }

      // Unit-lower-triangular system (I + M) U = diag(beta) (V - diag(decay) K S):
      // M[t][i] = beta_t * decay(i+1..t-1] * <k_t, k_i> for i < t.
      for (std::size_t t = 0; t < c; ++t) {
        const double* kt = key_row(t);
        for (std::size_t i = 0; i < t; ++i) {
          const double* ki = key_row(i);
          double dotk = 0.0;
          for (std::size_t r = 0; r < D; ++r) dotk += kt[r] * ki[r];
          m[t * chunk_size + i] = gate_b(t) * decay[t * stride + (i + 1)] * dotk;
        }
      }
      for (std::size_t t = 0; t < c; ++t) {
        const double bt = gate_b(t);
        const double d0 = decay[t * stride + 0];
        const double* v = val_row(t);
        double* ut = u.data() + t * D;
        for (std::size_t col = 0; col < D; ++col) ut[col] = bt * (v[col] - d0 * ks0[t * D + col]);
        for (std::size_t i = 0; i < t; ++i) {
          const double mi = m[t * chunk_size + i];
          const double* ui = u.data() + i * D;
          for (std::size_t col = 0; col < D; ++col) ut[col] -= mi * ui[col];
        }
      }

      // S <- decay(0..c] S + sum_t decay(t+1..c] k_t^T u_t
      const double dall = decay[c * stride + 0];
      for (std::size_t r = 0; r < D * D; ++r) sh[r] *= dall;
      for (std::size_t t = 0; t < c; ++t) {
        const double dt = decay[c * stride + (t + 1)];
        const double* k = key_row(t);
        const double* ut = u.data() + t * D;
        for (std::size_t r = 0; r < D; ++r) {
          const double kr = dt * k[r];
          for (std::size_t col = 0; col < D; ++col) sh[r * D + col] += kr * ut[col];
        }
      }
    }
  }
  commit(state, s, "update_chunkwise");
}

Tensor query_state(const RecurrentState& state, const Tensor& queries) {
  const std::size_t H = state.num_heads(), D = state.head_dim();
  if (queries.ndim() != 3 || queries.extent(1) != H || queries.extent(2) != D) {
    throw std::invalid_argument("query_state: queries must be L-by-H-by-D matching the state");
  }
  const std::size_t L = queries.extent(0);
  auto qv = queries.values();
  auto sv = state.s.values();
  std::vector<double> out(L * H * D);
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t h = 0; h < H; ++h) {
      const double* q = qv.data() + (l * H + h) * D;
      const double* sh = sv.data() + h * D * D;
      double* o = out.data() + (l * H + h) * D;
      for (std::size_t c = 0; c < D; ++c) {
        double acc = 0.0;
        for (std::size_t r = 0; r < D; ++r) acc += q[r] * sh[r * D + c];
        o[c] = acc;
      }
    }
  }
  return Tensor::from({L, H, D}, std::move(out), queries.precision());
}

}  // namespace sattn
