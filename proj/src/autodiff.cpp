#include "songci/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "songci/error.hpp"
#include "songci/kernels.hpp"

namespace songci::ad {

namespace {

constexpr const char* kModule = "autodiff";

Graph& graph_of(Var a) {
  if (a.graph == nullptr) throw UsageError(kModule, "variable is not attached to a graph");
  return *a.graph;
}

Graph& graph_of(Var a, Var b) {
  if (a.graph != b.graph) throw UsageError(kModule, "variables belong to different graphs");
  return graph_of(a);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw UsageError(kModule, std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                  shape_string(b.shape()));
  }
}

Tensor checked(Tensor t, const char* op) {
  if (!t.all_finite()) throw NumericError(kModule, std::string(op) + " produced a non-finite value");
  return t;
}

}  // namespace

const Tensor& Var::value() const { return graph_of(*this).value(id); }

// ---------------------------------------------------------------------------
// Graph

Var Graph::constant(Tensor value) {
  Node node;
  node.owned = checked(std::move(value), "constant");
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Graph::parameter(const Tensor& value, Tensor* grad_sink) {
  if (grad_sink != nullptr && grad_sink->shape() != value.shape()) {
    throw UsageError(kModule, "gradient sink " + shape_string(grad_sink->shape()) + " does not match parameter " +
                                  shape_string(value.shape()));
  }
  Node node;
  node.ref = &value;
  node.sink = grad_sink;
  node.needs_grad = grad_sink != nullptr;
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

const Tensor& Graph::value(Var v) const {
  if (v.graph != this) throw UsageError(kModule, "variable belongs to another graph");
  return value(v.id);
}

const Tensor& Graph::value(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.ref != nullptr ? *n.ref : n.owned;
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.sink != nullptr) return *n.sink;
  if (n.grad.empty()) return Tensor(value(v.id).shape(), 0.0);
  return n.grad;
}

Var Graph::push(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  Node node;
  node.owned = std::move(value);
  node.needs_grad = std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) { return nodes_[i].needs_grad; });
  if (node.needs_grad) node.backward = std::move(fn);
  node.inputs = std::move(inputs);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Tensor& Graph::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.sink != nullptr) return *n.sink;
  if (n.grad.empty()) n.grad = Tensor(value(id).shape(), 0.0);
  return n.grad;
}

const Tensor* Graph::node_grad(std::size_t id) const {
  const Node& n = nodes_[id];
  if (n.sink != nullptr) return n.sink;
  return n.grad.empty() ? nullptr : &n.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw UsageError(kModule, "loss belongs to another graph");
  if (value(loss.id).size() != 1) {
    throw UsageError(kModule, "backward needs a scalar loss, got shape " + shape_string(value(loss.id).shape()));
  }
  if (!nodes_[loss.id].needs_grad) return;
  grad_buffer(loss.id)[0] += 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.needs_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, id);
  }
}

// ---------------------------------------------------------------------------
// Elementwise

Var add(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape("add", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return g.push(checked(std::move(out), "add"), {a.id, b.id}, [a, b](Graph& gr, std::size_t self) {
    const Tensor& gout = *gr.node_grad(self);
    for (std::size_t in : {a.id, b.id}) {
      if (!gr.needs_grad(in)) continue;
      Tensor& gi = gr.grad_buffer(in);
      for (std::size_t i = 0; i < gout.size(); ++i) gi[i] += gout[i];
    }
  });
}

Var sub(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape("sub", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return g.push(checked(std::move(out), "sub"), {a.id, b.id}, [a, b](Graph& gr, std::size_t self) {
    const Tensor& gout = *gr.node_grad(self);
    if (gr.needs_grad(a.id)) {
      Tensor& ga = gr.grad_buffer(a.id);
      for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
    }
    if (gr.needs_grad(b.id)) {
      Tensor& gb = gr.grad_buffer(b.id);
      for (std::size_t i = 0; i < gout.size(); ++i) gb[i] -= gout[i];
    }
  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape("mul", x, y);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return g.push(checked(std::move(out), "mul"), {a.id, b.id}, [a, b](Graph& gr, std::size_t self) {
    const Tensor& gout = *gr.node_grad(self);
    const Tensor& xv = gr.value(a.id);
    const Tensor& yv = gr.value(b.id);
    if (gr.needs_grad(a.id)) {
      Tensor& ga = gr.grad_buffer(a.id);
      for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] * yv[i];
    }
    if (gr.needs_grad(b.id)) {
      Tensor& gb = gr.grad_buffer(b.id);
      for (std::size_t i = 0; i < gout.size(); ++i) gb[i] += gout[i] * xv[i];
    }
  });
}

Var scale(Var a, double factor) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return g.push(checked(std::move(out), "scale"), {a.id}, [a, factor](Graph& gr, std::size_t self) {
    const Tensor& gout = *gr.node_grad(self);
    Tensor& ga = gr.grad_buffer(a.id);
    for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] * factor;
  });
}

Var add_n(std::span<const Var> terms) {
  if (terms.empty()) throw UsageError(kModule, "add_n of zero terms");
  Graph& g = graph_of(terms[0]);
  Tensor out = terms[0].value();
  std::vector<std::size_t> inputs{terms[0].id};
  for (std::size_t k = 1; k < terms.size(); ++k) {
    graph_of(terms[0], terms[k]);
    const Tensor& t = terms[k].value();
    require_same_shape("add_n", out, t);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += t[i];
    inputs.push_back(terms[k].id);
  }
  return g.push(checked(std::move(out), "add_n"), inputs, [inputs](Graph& gr, std::size_t self) {
    const Tensor& gout = *gr.node_grad(self);
    for (std::size_t in : inputs) {
      if (!gr.needs_grad(in)) continue;
      Tensor& gi = gr.grad_buffer(in);
      for (std::size_t i = 0; i < gout.size(); ++i) gi[i] += gout[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra and layout

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || (B.rank() != 1 && B.rank() != 2) || A.dim(1) != B.dim(0)) {
    throw UsageError(kModule, "matmul: shape mismatch " + shape_string(A.shape()) + " vs " + shape_string(B.shape()));
  }
  const std::size_t m = A.dim(0);
  const std::size_t k = A.dim(1);
  if (B.rank() == 1) {
    Tensor out({m});
    kernels::gemv(A.data(), m, k, B.data(), out.data());
    return g.push(checked(std::move(out), "matmul"), {a.id, b.id}, [a, b, m, k](Graph& gr, std::size_t self) {
      const Tensor& gout = *gr.node_grad(self);
      if (gr.needs_grad(a.id)) kernels::ger_acc(gr.grad_buffer(a.id).data(), m, k, gout.data(), gr.value(b.id).data());
      if (gr.needs_grad(b.id)) kernels::gemv_t_acc(gr.value(a.id).data(), m, k, gout.data(), gr.grad_buffer(b.id).data());
    });
  }
  const std::size_t n = B.dim(1);
  Tensor out({m, n});
  kernels::gemm(A.data(), B.data(), m, k, n, out.data());
  return g.push(checked(std::move(out), "matmul"), {a.id, b.id}, [a, b, m, k, n](Graph& gr, std::size_t self) {
    const Tensor& gout = *gr.node_grad(self);
    const Tensor& Av = gr.value(a.id);
    const Tensor& Bv = gr.value(b.id);
    if (gr.needs_grad(a.id)) {
      // dA += G B^T
      Tensor& ga = gr.grad_buffer(a.id);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += gout[i * n + j] * Bv[p * n + j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (gr.needs_grad(b.id)) {
      // dB += A^T G
      Tensor& gb = gr.grad_buffer(b.id);
      for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < m; ++i) acc += Av[i * k + p] * gout[i * n + j];
          gb[p * n + j] += acc;
        }
      }
    }
  });
}

Var transpose(Var a) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  if (x.rank() != 2) throw UsageError(kModule, "transpose needs rank 2, got " + shape_string(x.shape()));
  const std::size_t r = x.dim(0);
  const std::size_t c = x.dim(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  }
  return g.push(std::move(out), {a.id}, [a, r, c](Graph& gr, std::size_t self) {
    const Tensor& gout = *gr.node_grad(self);
    Tensor& ga = gr.grad_buffer(a.id);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += gout[j * r + i];
    }
  });
}

Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw UsageError(kModule, "concat of zero parts");
  Graph& g = graph_of(parts[0]);
  const std::size_t rank = parts[0].value().rank();
  if (rank != 1 && rank != 2) throw UsageError(kModule, "concat supports rank 1 or 2");
  if (axis >= rank) throw UsageError(kModule, "concat axis " + std::to_string(axis) + " out of range");
  std::vector<std::size_t> inputs;
  for (const Var& p : parts) {
    graph_of(parts[0], p);
    const Tensor& t = p.value();
    bool ok = t.rank() == rank;
    if (ok && rank == 2) ok = t.dim(1 - axis) == parts[0].value().dim(1 - axis);
    if (!ok) {
      throw UsageError(kModule, "concat: shape mismatch " + shape_string(parts[0].value().shape()) + " vs " +
                                    shape_string(t.shape()));
    }
    inputs.push_back(p.id);
  }

  if (rank == 1 || axis == 0) {
    // Contiguous blocks.
    Shape shape = parts[0].value().shape();
    shape[0] = 0;
    std::vector<double> data;
    std::vector<std::size_t> offsets;
    for (const Var& p : parts) {
      offsets.push_back(data.size());
      shape[0] += p.value().dim(0);
      data.insert(data.end(), p.value().data().begin(), p.value().data().end());
    }
    return g.push(Tensor(std::move(shape), std::move(data)), inputs, [inputs, offsets](Graph& gr, std::size_t self) {
      const Tensor& gout = *gr.node_grad(self);
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        if (!gr.needs_grad(inputs[k])) continue;
        Tensor& gi = gr.grad_buffer(inputs[k]);
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += gout[offsets[k] + i];
      }
    });
  }

  const std::size_t rows = parts[0].value().dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    widths.push_back(p.value().dim(1));
    total += widths.back();
  }
  Tensor out({rows, total});
  std::size_t col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& t = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < widths[k]; ++c) out[r * total + col + c] = t[r * widths[k] + c];
    }
    col += widths[k];
  }
  return g.push(std::move(out), inputs, [inputs, widths, rows, total](Graph& gr, std::size_t self) {
    const Tensor& gout = *gr.node_grad(self);
    std::size_t col0 = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      if (gr.needs_grad(inputs[k])) {
        Tensor& gi = gr.grad_buffer(inputs[k]);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < widths[k]; ++c) gi[r * widths[k] + c] += gout[r * total + col0 + c];
        }
      }
      col0 += widths[k];
    }
  });
}

Var slice(Var a, std::size_t begin, std::size_t length) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  if (length == 0 || begin + length > x.dim(0)) {
    throw UsageError(kModule, "slice [" + std::to_string(begin) + ", " + std::to_string(begin + length) +
                                  ") out of range for " + shape_string(x.shape()));
  }
  const std::size_t inner = x.size() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = length;
  std::vector<double> data(x.data().begin() + static_cast<std::ptrdiff_t>(begin * inner),
                           x.data().begin() + static_cast<std::ptrdiff_t>((begin + length) * inner));
  return g.push(Tensor(std::move(shape), std::move(data)), {a.id}, [a, begin, inner](Graph& gr, std::size_t self) {
    const Tensor& gout = *gr.node_grad(self);
    Tensor& ga = gr.grad_buffer(a.id);
    for (std::size_t i = 0; i < gout.size(); ++i) ga[begin * inner + i] += gout[i];
  });
}

Var reshape(Var a, Shape shape) {
  Graph& g = graph_of(a);
  Tensor out = a.value().reshaped(std::move(shape));
  return g.push(std::move(out), {a.id}, [a](Graph& gr, std::size_t self) {
    const Tensor& gout = *gr.node_grad(self);
    Tensor& ga = gr.grad_buffer(a.id);
    for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
  });
}

Var stack(std::span<const Var> rows) {
  std::vector<Var> shaped;
  shaped.reserve(rows.size());
  for (const Var& r : rows) {
    if (r.value().rank() != 1) throw UsageError(kModule, "stack needs rank-1 rows, got " + shape_string(r.shape()));
    shaped.push_back(reshape(r, {1, r.value().dim(0)}));
  }
  return concat(shaped, 0);
}

// ---------------------------------------------------------------------------
// Nonlinearities

Var tanh(Var a) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x[i]);
  return g.push(checked(std::move(out), "tanh"), {a.id}, [a](Graph& gr, std::size_t self) {
    const Tensor& gout = *gr.node_grad(self);
    const Tensor& y = gr.value(self);
    Tensor& ga = gr.grad_buffer(a.id);
    for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] * (1.0 - y[i] * y[i]);
  });
}

Var sigmoid(Var a) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-x[i])) : std::exp(x[i]) / (1.0 + std::exp(x[i]));
  }
  return g.push(checked(std::move(out), "sigmoid"), {a.id}, [a](Graph& gr, std::size_t self) {
    const Tensor& gout = *gr.node_grad(self);
    const Tensor& y = gr.value(self);
    Tensor& ga = gr.grad_buffer(a.id);
    for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] * y[i] * (1.0 - y[i]);
  });
}

Var softmax(Var a, std::size_t axis) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  if (x.rank() == 0 || x.rank() > 2 || axis >= x.rank()) {
    throw UsageError(kModule, "softmax axis " + std::to_string(axis) + " invalid for " + shape_string(x.shape()));
  }
  // Reduction runs along `axis`; groups index the other axis.
  std::size_t groups = 1;
  std::size_t len = x.dim(0);
  std::size_t stride = 1;
  std::size_t group_step = 0;
  if (x.rank() == 2) {
    if (axis == 1) {
      groups = x.dim(0);
      len = x.dim(1);
      stride = 1;
      group_step = x.dim(1);
    } else {
      groups = x.dim(1);
      len = x.dim(0);
      stride = x.dim(1);
      group_step = 1;
    }
  }
  Tensor out(x.shape());
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const std::size_t base = gi * group_step;
    double mx = x[base];
    for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, x[base + k * stride]);
    double total = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      const double e = std::exp(x[base + k * stride] - mx);
      out[base + k * stride] = e;
      total += e;
    }
    for (std::size_t k = 0; k < len; ++k) out[base + k * stride] /= total;
  }
  return g.push(checked(std::move(out), "softmax"), {a.id},
                [a, groups, len, stride, group_step](Graph& gr, std::size_t self) {
                  const Tensor& gout = *gr.node_grad(self);
                  const Tensor& y = gr.value(self);
                  Tensor& ga = gr.grad_buffer(a.id);
                  for (std::size_t gi = 0; gi < groups; ++gi) {
                    const std::size_t base = gi * group_step;
                    double inner = 0.0;
                    for (std::size_t k = 0; k < len; ++k) inner += gout[base + k * stride] * y[base + k * stride];
                    for (std::size_t k = 0; k < len; ++k) {
                      const std::size_t i = base + k * stride;
                      ga[i] += y[i] * (gout[i] - inner);
                    }
                  }
                });
}

Var max_pool_pairs(Var a) {
  Graph& g = graph_of(a);
  const Tensor& x = a.value();
  if (x.rank() != 1 || x.size() % 2 != 0) {
    throw UsageError(kModule, "max_pool_pairs needs an even-length vector, got " + shape_string(x.shape()));
  }
  const std::size_t n = x.size() / 2;
  Tensor out({n});
  std::vector<std::size_t> winner(n);
  for (std::size_t i = 0; i < n; ++i) {
    winner[i] = x[2 * i + 1] > x[2 * i] ? 2 * i + 1 : 2 * i;
    out[i] = x[winner[i]];
  }
  return g.push(std::move(out), {a.id}, [a, winner](Graph& gr, std::size_t self) {
    const Tensor& gout = *gr.node_grad(self);
    Tensor& ga = gr.grad_buffer(a.id);
    for (std::size_t i = 0; i < winner.size(); ++i) ga[winner[i]] += gout[i];
  });
}

// ---------------------------------------------------------------------------
// Lookup and losses

Var embedding_gather(Var matrix, std::span<const int> ids) {
  Graph& g = graph_of(matrix);
  const Tensor& m = matrix.value();
  if (m.rank() != 2) throw UsageError(kModule, "embedding matrix must be rank 2, got " + shape_string(m.shape()));
  if (ids.empty()) throw UsageError(kModule, "embedding_gather with no ids");
  const std::size_t rows = m.dim(0);
  const std::size_t d = m.dim(1);
  std::vector<int> kept(ids.begin(), ids.end());
  Tensor out({kept.size(), d});
  for (std::size_t k = 0; k < kept.size(); ++k) {
    if (kept[k] < 0 || static_cast<std::size_t>(kept[k]) >= rows) {
      throw UsageError(kModule, "id " + std::to_string(kept[k]) + " out of range for " + std::to_string(rows) + " rows");
    }
    const auto r = static_cast<std::size_t>(kept[k]);
    std::copy_n(m.data().begin() + static_cast<std::ptrdiff_t>(r * d), d,
                out.data().begin() + static_cast<std::ptrdiff_t>(k * d));
  }
  return g.push(std::move(out), {matrix.id}, [matrix, kept, d](Graph& gr, std::size_t self) {
    const Tensor& gout = *gr.node_grad(self);
    Tensor& gm = gr.grad_buffer(matrix.id);
    for (std::size_t k = 0; k < kept.size(); ++k) {
      const auto r = static_cast<std::size_t>(kept[k]);
      for (std::size_t j = 0; j < d; ++j) gm[r * d + j] += gout[k * d + j];
    }
  });
}

Var embedding_row(Var matrix, int id) {
  const int ids[1] = {id};
  Var rows = embedding_gather(matrix, ids);
  return reshape(rows, {rows.value().dim(1)});
}

Var cross_entropy(Var probs, int target) {
  Graph& g = graph_of(probs);
  const Tensor& p = probs.value();
  if (p.rank() != 1) throw UsageError(kModule, "cross_entropy needs a vector, got " + shape_string(p.shape()));
  if (target < 0 || static_cast<std::size_t>(target) >= p.size()) {
    throw UsageError(kModule, "target " + std::to_string(target) + " out of range for " + std::to_string(p.size()));
  }
  const auto t = static_cast<std::size_t>(target);
  Tensor out = Tensor::scalar(-std::log(p[t]));
  return g.push(checked(std::move(out), "cross_entropy"), {probs.id}, [probs, t](Graph& gr, std::size_t self) {
    const double gout = (*gr.node_grad(self))[0];
    gr.grad_buffer(probs.id)[t] -= gout / gr.value(probs.id)[t];
  });
}

Var sum(Var a) {
  Graph& g = graph_of(a);
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return g.push(checked(Tensor::scalar(total), "sum"), {a.id}, [a](Graph& gr, std::size_t self) {
    const double gout = (*gr.node_grad(self))[0];
    Tensor& ga = gr.grad_buffer(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout;
  });
}

Var dot(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape("dot", x, y);
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += x[i] * y[i];
  return g.push(checked(Tensor::scalar(total), "dot"), {a.id, b.id}, [a, b](Graph& gr, std::size_t self) {
    const double gout = (*gr.node_grad(self))[0];
    const Tensor& xv = gr.value(a.id);
    const Tensor& yv = gr.value(b.id);
    if (gr.needs_grad(a.id)) {
      Tensor& ga = gr.grad_buffer(a.id);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout * yv[i];
    }
    if (gr.needs_grad(b.id)) {
      Tensor& gb = gr.grad_buffer(b.id);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gout * xv[i];
    }
  });
}

// ---------------------------------------------------------------------------
// grad_check

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

GradCheckReport grad_check(const LossFn& loss_fn, std::span<const ParamRef> params, double step, double tolerance,
                           std::size_t max_elements) {
  if (!(step > 0.0)) throw UsageError(kModule, "grad_check step must be positive");
  GradCheckReport report;
  report.tolerance = tolerance;

  for (const auto& p : params) p.grad->fill(0.0);
  {
    Graph g;
    Var loss = loss_fn(g);
    g.backward(loss);
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(*p.grad);

  auto evaluate = [&]() {
    Graph g;
    return loss_fn(g).value().item();
  };

  for (std::size_t k = 0; k < params.size(); ++k) {
    const ParamRef& p = params[k];
    GradCheckEntry entry;
    entry.name = p.name;
    const std::size_t n = p.value->size();
    const std::size_t stride = (max_elements == 0 || n <= max_elements) ? 1 : n / max_elements;
    for (std::size_t i = 0; i < n; i += stride) {
      double& x = (*p.value)[i];
      const double saved = x;
      x = saved + step;
      const double plus = evaluate();
      x = saved - step;
      const double minus = evaluate();
      x = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic[k][i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
      ++entry.checked;
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      if (rel > entry.max_rel_error || entry.checked == 1) {
        entry.max_rel_error = std::max(entry.max_rel_error, rel);
        entry.worst_index = i;
        entry.worst_analytic = a;
        entry.worst_numeric = numeric;
      }
    }
    report.entries.push_back(std::move(entry));
  }
  for (std::size_t k = 0; k < params.size(); ++k) *params[k].grad = analytic[k];
  return report;
}

}  // namespace songci::ad
