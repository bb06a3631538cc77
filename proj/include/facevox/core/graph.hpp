#pragma once

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "facevox/core/tensor.hpp"

namespace facevox::core {

class Graph;

/// Handle to a value recorded on a Graph. Cheap to copy; valid while the
/// Graph that produced it is alive.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  bool valid() const { return graph_ != nullptr; }
  Graph& graph() const;
  std::size_t id() const { return id_; }

  const Shape& shape() const;
  const std::vector<double>& value() const;
  std::size_t size() const { return value().size(); }
  double item() const;
  Tensor tensor() const;

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Numeric vector-Jacobian product: reads `grad_out` (cotangent of node
/// `self`) and accumulates into the grad buffers of the node's inputs.
using BackwardFn = std::function<void(Graph&, std::size_t self, std::span<const double> grad_out)>;

/// Same product expressed as recorded operations, so the result can itself
/// be differentiated. `wanted[k]` is set for inputs that lie on the path
/// being differentiated; an op that cannot supply one of those must throw.
/// An invalid Var in the result means "no contribution".
using SymbolicVjpFn = std::function<std::vector<Var>(Graph&, std::size_t self, Var grad_out,
                                                     const std::vector<char>& wanted)>;

struct Node {
  std::string op;
  Shape shape;
  std::vector<double> value;
  std::vector<std::size_t> inputs;
  bool needs_grad = false;
  Tensor* leaf = nullptr;
  BackwardFn backward;
  SymbolicVjpFn symbolic;
};

/// Records one forward pass in application order. Node ids are a
/// topological order by construction: an operation can only consume
/// already-recorded values.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf bound to an externally owned tensor; backward accumulates into
  /// `t.grad` when `t.requires_grad` is set.
  Var parameter(Tensor& t);
  Var constant(Tensor t);
  /// Differentiable input without external storage; read its gradient
  /// with grad_of() after backward().
  Var input(Tensor t);

  Var record(std::string op, Shape shape, std::vector<double> value, const std::vector<Var>& inputs,
             BackwardFn backward, SymbolicVjpFn symbolic = {});

  /// Reverse pass from a scalar. Each node is visited once; leaf gradients
  /// accumulate additively across calls.
  void backward(Var loss);

  /// d(output)/d(wrt) as a new recorded value, differentiable with respect
  /// to everything else on the graph. Every op between `wrt` and `output`
  /// must provide a symbolic VJP.
  Var gradient(Var output, Var wrt);

  const std::vector<double>& grad_of(Var v) const;

  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  /// Gradient buffer of node `id`, zero-allocated on first access.
  std::vector<double>& grad_buffer(std::size_t id);
  void accumulate(std::size_t id, std::span<const double> g);

 private:
  std::deque<Node> nodes_;
  std::vector<std::vector<double>> grads_;
};

}  // namespace facevox::core
