#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "songci/tensor.hpp"

// Tape-based reverse-mode differentiation over dense tensors.
//
// A Graph is an append-only list of nodes; every op appends one node whose
// inputs precede it, so the tape is acyclic by construction. backward() walks
// the tape once in reverse. Parameter nodes reference caller-owned tensors and
// deliver their gradients straight into a caller-owned sink, which accumulates
// across graphs until the caller clears it.
namespace songci::ad {

class Graph;

struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  // `value` must outlive the graph. A null sink makes the node a constant.
  Var parameter(const Tensor& value, Tensor* grad_sink);

  const Tensor& value(Var v) const;
  const Tensor& value(std::size_t id) const;
  // Gradient of the last backward() loss w.r.t. v; zeros when v is off-path.
  Tensor grad(Var v) const;
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  Var push(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);
  Tensor& grad_buffer(std::size_t id);
  const Tensor* node_grad(std::size_t id) const;

 private:
  struct Node {
    Tensor owned;
    const Tensor* ref = nullptr;
    Tensor grad;
    Tensor* sink = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
};

// Elementwise, equal shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_n(std::span<const Var> terms);

// A [m x k] times B [k] or [k x n].
Var matmul(Var a, Var b);
Var transpose(Var a);
// Rank 1 or 2; axis 1 only for rank 2.
Var concat(std::span<const Var> parts, std::size_t axis = 0);
Var concat(std::initializer_list<Var> parts, std::size_t axis = 0);
// Leading-axis slice [begin, begin + length).
Var slice(Var a, std::size_t begin, std::size_t length);
Var reshape(Var a, Shape shape);
// Rank-1 inputs of equal length stacked as rows.
Var stack(std::span<const Var> rows);

Var tanh(Var a);
Var sigmoid(Var a);
Var softmax(Var a, std::size_t axis = 0);
// [x0, x1, x2, x3, ...] -> [max(x0, x1), max(x2, x3), ...]
Var max_pool_pairs(Var a);

// Rows of `matrix` selected by ids: [n x d].
Var embedding_gather(Var matrix, std::span<const int> ids);
// A single row: [d].
Var embedding_row(Var matrix, int id);

// -log probs[target]; `probs` already normalised.
Var cross_entropy(Var probs, int target);
Var sum(Var a);
Var dot(Var a, Var b);

// ---------------------------------------------------------------------------
// Finite-difference verification.

struct ParamRef {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
};

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 1e-4;

  double max_rel_error() const;
  bool passed() const { return max_rel_error() < tolerance; }
};

// Builds the scalar loss for the current parameter values in a fresh graph.
using LossFn = std::function<Var(Graph&)>;

// Relative error is |a - n| / max(|a|, |n|, kGradCheckFloor).
inline constexpr double kGradCheckFloor = 1e-6;

// Compares analytic gradients against (f(p + step e_i) - f(p - step e_i)) / 2 step
// for every element (or an evenly strided subset of max_elements per tensor).
GradCheckReport grad_check(const LossFn& loss_fn, std::span<const ParamRef> params, double step = 1e-4,
                           double tolerance = 1e-4, std::size_t max_elements = 0);

}  // namespace songci::ad
