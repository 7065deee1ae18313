#include "sattn/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace sattn::ad {

Tape::Node& Tape::node(Var v) {
  if (!v.valid() || v.id >= nodes_.size()) throw std::invalid_argument("tape: bad var");
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw std::invalid_argument("tape: bad var");
  return nodes_[v.id];
}

Var Tape::push(Tensor value, bool requires_grad,
               std::function<void(Tape&, const Tensor&)> pull) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.pull = std::move(pull);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::input(Tensor value) { return push(std::move(value), true, nullptr); }

Var Tape::constant(Tensor value) { return push(std::move(value), false, nullptr); }

const Tensor& Tape::value(Var v) const { return node(v).value; }

const Tensor& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!n.requires_grad) throw std::invalid_argument("tape: gradient of a non-input requested");
  if (!n.grad_live) {
    throw std::logic_error("tape: gradient not populated; call backward() first");
  }
  return n.grad;
}

Tensor Tape::grad_or_zero(Var v) const {
  const Node& n = node(v);
  if (!n.requires_grad) throw std::invalid_argument("tape: gradient of a non-input requested");
  if (!n.grad_live) return Tensor(n.value.shape(), Precision::f64);
  return n.grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  if (!n.grad_live) {
    n.grad = Tensor(n.value.shape(), Precision::f64);
    n.grad_live = true;
  }
  if (!n.grad.same_shape(g)) throw std::logic_error("tape: gradient shape mismatch");
  n.grad = sattn::add(n.grad, g);
}

void Tape::backward(Var loss) {
  Node& top = node(loss);
  if (top.value.numel() != 1) throw std::invalid_argument("tape: loss must be a single element");
  accumulate(loss, Tensor::full(top.value.shape(), 1.0));
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.grad_live && n.pull) n.pull(*this, n.grad);
  }
}

Var Tape::matmul(Var a, Var b) {
  const bool needs = node(a).requires_grad || node(b).requires_grad;
  Tensor out = sattn::matmul(node(a).value, node(b).value);
  return push(std::move(out), needs, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, sattn::matmul(g, sattn::transpose(t.node(b).value)));
    t.accumulate(b, sattn::matmul(sattn::transpose(t.node(a).value), g));
  });
}

Var Tape::add(Var a, Var b) {
  const bool needs = node(a).requires_grad || node(b).requires_grad;
  return push(sattn::add(node(a).value, node(b).value), needs,
              [a, b](Tape& t, const Tensor& g) {
                t.accumulate(a, g);
                t.accumulate(b, g);
              });
}

Var Tape::sub(Var a, Var b) {
  const bool needs = node(a).requires_grad || node(b).requires_grad;
  return push(sattn::sub(node(a).value, node(b).value), needs,
              [a, b](Tape& t, const Tensor& g) {
                t.accumulate(a, g);
                t.accumulate(b, sattn::scale(g, -1.0));
              });
}

Var Tape::hadamard(Var a, Var b) {
  const bool needs = node(a).requires_grad || node(b).requires_grad;
  return push(sattn::hadamard(node(a).value, node(b).value), needs,
              [a, b](Tape& t, const Tensor& g) {
                t.accumulate(a, sattn::hadamard(g, t.node(b).value));
                t.accumulate(b, sattn::hadamard(g, t.node(a).value));
              });
}

Var Tape::scale(Var a, double c) {
  return push(sattn::scale(node(a).value, c), node(a).requires_grad,
              [a, c](Tape& t, const Tensor& g) { t.accumulate(a, sattn::scale(g, c)); });
}

Var Tape::add_scalar(Var a, double c) {
  return push(sattn::add_scalar(node(a).value, c), node(a).requires_grad,
              [a](Tape& t, const Tensor& g) { t.accumulate(a, g); });
}

Var Tape::add_row_broadcast(Var m, Var row) {
  const bool needs = node(m).requires_grad || node(row).requires_grad;
  return push(sattn::add_row_broadcast(node(m).value, node(row).value), needs,
              [m, row](Tape& t, const Tensor& g) {
                t.accumulate(m, g);
                const Tensor& rv = t.node(row).value;
                Tensor rg(rv.shape(), Precision::f64);
                for (std::size_t i = 0; i < g.rows(); ++i) {
                  for (std::size_t j = 0; j < g.cols(); ++j) {
                    rg.set(j, rg.at(j) + g.at(i, j));
                  }
                }
                t.accumulate(row, rg);
              });
}

Var Tape::sigmoid(Var a) {
  Tensor out = sattn::sigmoid(node(a).value);
  Var v = push(out, node(a).requires_grad, nullptr);
  node(v).pull = [a, v](Tape& t, const Tensor& g) {
    const Tensor& y = t.node(v).value;
    Tensor dx(y.shape(), Precision::f64);
    for (std::size_t i = 0; i < y.numel(); ++i) {
      const double s = y.at(i);
      dx.set(i, g.at(i) * s * (1.0 - s));
    }
    t.accumulate(a, dx);
  };
  return v;
}

Var Tape::tanh_op(Var a) {
  Tensor out = sattn::tanh_map(node(a).value);
  Var v = push(out, node(a).requires_grad, nullptr);
  node(v).pull = [a, v](Tape& t, const Tensor& g) {
    const Tensor& y = t.node(v).value;
    Tensor dx(y.shape(), Precision::f64);
    for (std::size_t i = 0; i < y.numel(); ++i) {
      const double c = y.at(i);
      dx.set(i, g.at(i) * (1.0 - c * c));
    }
    t.accumulate(a, dx);
  };
  return v;
}

Var Tape::softmax_rows(Var a) {
  Tensor out = sattn::softmax_rows(node(a).value);
  Var v = push(out, node(a).requires_grad, nullptr);
  node(v).pull = [a, v](Tape& t, const Tensor& g) {
    const Tensor& y = t.node(v).value;
    const std::size_t m = y.rows(), n = y.cols();
    Tensor dx(y.shape(), Precision::f64);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g.at(i, j) * y.at(i, j);
      for (std::size_t j = 0; j < n; ++j) {
        dx.set(i, j, y.at(i, j) * (g.at(i, j) - dot));
      }
    }
    t.accumulate(a, dx);
  };
  return v;
}

Var Tape::l2norm_rows(Var a) {
  Tensor out = sattn::l2norm_rows(node(a).value);
  Var v = push(out, node(a).requires_grad, nullptr);
  node(v).pull = [a, v](Tape& t, const Tensor& g) {
    const Tensor& x = t.node(a).value;
    const Tensor& y = t.node(v).value;
    const std::size_t m = x.rows(), n = x.cols();
    Tensor dx(x.shape(), Precision::f64);
    for (std::size_t i = 0; i < m; ++i) {
      double sq = 0.0;
      for (std::size_t j = 0; j < n; ++j) sq += x.at(i, j) * x.at(i, j);
      const double norm = std::sqrt(sq);
      if (norm < kEpsNorm) continue;  // degenerate rows map to zero; zero gradient
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g.at(i, j) * y.at(i, j);
      const double inv = 1.0 / norm;
      for (std::size_t j = 0; j < n; ++j) {
        dx.set(i, j, (g.at(i, j) - y.at(i, j) * dot) * inv);
      }
    }
    t.accumulate(a, dx);
  };
  return v;
}

Var Tape::rope(Var a, std::vector<std::size_t> positions, double base) {
  Tensor out = sattn::rope(node(a).value, positions, base);
  return push(std::move(out), node(a).requires_grad,
              [a, positions = std::move(positions), base](Tape& t, const Tensor& g) {
                t.accumulate(a, sattn::rope_inverse(g, positions, base));
              });
}

Var Tape::transpose(Var a) {
  return push(sattn::transpose(node(a).value), node(a).requires_grad,
              [a](Tape& t, const Tensor& g) { t.accumulate(a, sattn::transpose(g)); });
}

Var Tape::reshape(Var a, std::vector<std::size_t> shape) {
  Tensor out = node(a).value.reshaped(shape);
  return push(std::move(out), node(a).requires_grad, [a](Tape& t, const Tensor& g) {
    t.accumulate(a, g.reshaped(t.node(a).value.shape()));
  });
}

Var Tape::slice_rows(Var a, std::size_t r0, std::size_t r1) {
  Tensor out = sattn::slice_rows(node(a).value, r0, r1);
  return push(std::move(out), node(a).requires_grad, [a, r0](Tape& t, const Tensor& g) {
    const Tensor& x = t.node(a).value;
    Tensor dx(x.shape(), Precision::f64);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < g.cols(); ++j) dx.set(r0 + i, j, g.at(i, j));
    }
    t.accumulate(a, dx);
  });
}

Var Tape::slice_cols(Var a, std::size_t c0, std::size_t c1) {
  Tensor out = sattn::slice_cols(node(a).value, c0, c1);
  return push(std::move(out), node(a).requires_grad, [a, c0](Tape& t, const Tensor& g) {
    const Tensor& x = t.node(a).value;
    Tensor dx(x.shape(), Precision::f64);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < g.cols(); ++j) dx.set(i, c0 + j, g.at(i, j));
    }
    t.accumulate(a, dx);
  });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  std::vector<Tensor> values;
  bool needs = false;
  for (Var p : parts) {
    values.push_back(node(p).value);
    needs = needs || node(p).requires_grad;
  }
  Tensor out = sattn::concat_rows(values);
  return push(std::move(out), needs, [parts](Tape& t, const Tensor& g) {
    std::size_t r = 0;
    for (Var p : parts) {
      const std::size_t rows = t.node(p).value.rows();
      t.accumulate(p, sattn::slice_rows(g, r, r + rows));
      r += rows;
    }
  });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  std::vector<Tensor> values;
  bool needs = false;
  for (Var p : parts) {
    values.push_back(sattn::transpose(node(p).value));
    needs = needs || node(p).requires_grad;
  }
  Tensor out = sattn::transpose(sattn::concat_rows(values));
  return push(std::move(out), needs, [parts](Tape& t, const Tensor& g) {
    std::size_t c = 0;
    for (Var p : parts) {
      const std::size_t cols = t.node(p).value.cols();
      t.accumulate(p, sattn::slice_cols(g, c, c + cols));
      c += cols;
    }
  });
}

Var Tape::element(Var a, std::size_t i, std::size_t j) {
  Tensor out = Tensor::from({1, 1}, {node(a).value.at(i, j)});
  return push(std::move(out), node(a).requires_grad, [a, i, j](Tape& t, const Tensor& g) {
    const Tensor& x = t.node(a).value;
    Tensor dx(x.shape(), Precision::f64);
    dx.set(i, j, g.at(0));
    t.accumulate(a, dx);
  });
}

Var Tape::scale_by(Var a, Var s) {
  if (node(s).value.numel() != 1) throw std::invalid_argument("scale_by: scalar must be 1-by-1");
  const bool needs = node(a).requires_grad || node(s).requires_grad;
  Tensor out = sattn::scale(node(a).value, node(s).value.at(0));
  return push(std::move(out), needs, [a, s](Tape& t, const Tensor& g) {
    const double sv = t.node(s).value.at(0);
    t.accumulate(a, sattn::scale(g, sv));
    const Tensor& av = t.node(a).value;
    double acc = 0.0;
    for (std::size_t i = 0; i < av.numel(); ++i) acc += av.at(i) * g.at(i);
    t.accumulate(s, Tensor::from({1, 1}, {acc}));
  });
}

Var Tape::sum_all(Var a) {
  double acc = 0.0;
  for (double v : node(a).value.values()) acc += v;
  return push(Tensor::from({1, 1}, {acc}), node(a).requires_grad,
              [a](Tape& t, const Tensor& g) {
                t.accumulate(a, Tensor::full(t.node(a).value.shape(), g.at(0)));
              });
}

Var Tape::expand_gate(Var g, GateGranularity granularity, std::size_t heads,
                      std::size_t head_dim) {
  Tensor out = sattn::expand_gate(node(g).value, granularity, heads, head_dim);
  if (granularity == GateGranularity::elementwise) return g;
  return push(std::move(out), node(g).requires_grad,
              [g, granularity, heads, head_dim](Tape& t, const Tensor& go) {
                const Tensor& gv = t.node(g).value;
                Tensor dg(gv.shape(), Precision::f64);
                for (std::size_t i = 0; i < gv.rows(); ++i) {
                  for (std::size_t h = 0; h < heads; ++h) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < head_dim; ++j) {
                      acc += go.at(i, h * head_dim + j);
                    }
                    if (granularity == GateGranularity::scalar) {
                      dg.set(i, 0, dg.at(i, 0) + acc);
                    } else {
                      dg.set(i, h, acc);
                    }
                  }
                }
                t.accumulate(g, dg);
              });
}

Var Tape::mse(Var a, Var b, double denom) {
  Var d = sub(a, b);
  return scale(sum_all(hadamard(d, d)), 1.0 / denom);
}

}  // namespace sattn::ad
