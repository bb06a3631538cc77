#include "facevox/core/graph.hpp"

#include <stdexcept>

#include "facevox/core/ops.hpp"

namespace facevox::core {

Graph& Var::graph() const {
  if (!graph_) throw std::logic_error("use of an unbound Var");
  return *graph_;
}

const Shape& Var::shape() const { return graph().node(id_).shape; }
const std::vector<double>& Var::value() const { return graph().node(id_).value; }

double Var::item() const {
  const auto& v = value();
  if (v.size() != 1) throw ShapeError("item() on value of shape " + to_string(shape()));
  return v[0];
}

Tensor Var::tensor() const { return Tensor(shape(), value()); }

Var Graph::parameter(Tensor& t) {
  Node n;
  n.op = "parameter";
  n.shape = t.shape;
  n.value = t.data;
  n.needs_grad = t.requires_grad;
  n.leaf = &t;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor t) {
  Node n;
  n.op = "constant";
  n.shape = std::move(t.shape);
  n.value = std::move(t.data);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::input(Tensor t) {
  Node n;
  n.op = "input";
  n.shape = std::move(t.shape);
  n.value = std::move(t.data);
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(std::string op, Shape shape, std::vector<double> value, const std::vector<Var>& inputs,
                  BackwardFn backward, SymbolicVjpFn symbolic) {
  if (numel(shape) != value.size()) throw ShapeError(op + ": value does not match shape " + to_string(shape));
  Node n;
  n.op = std::move(op);
  n.shape = std::move(shape);
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (&in.graph() != this) throw std::logic_error(n.op + ": operand recorded on another graph");
    n.inputs.push_back(in.id());
    n.needs_grad = n.needs_grad || nodes_[in.id()].needs_grad;
  }
  n.backward = std::move(backward);
  n.symbolic = std::move(symbolic);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

std::vector<double>& Graph::grad_buffer(std::size_t id) {
  if (grads_.size() < nodes_.size()) grads_.resize(nodes_.size());
  auto& g = grads_[id];
  if (g.empty()) g.assign(nodes_[id].value.size(), 0.0);
  return g;
}

void Graph::accumulate(std::size_t id, std::span<const double> g) {
  if (!nodes_[id].needs_grad) return;
  auto& buf = grad_buffer(id);
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

void Graph::backward(Var loss) {
  if (!loss.valid() || &loss.graph() != this) throw std::logic_error("backward: loss is not on this graph");
  if (loss.size() != 1) throw ShapeError("backward: loss must be scalar, got shape " + to_string(loss.shape()));

  grads_.assign(nodes_.size(), {});
  if (!nodes_[loss.id()].needs_grad) return;
  grad_buffer(loss.id())[0] = 1.0;

  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    auto& node = nodes_[id];
    if (!node.needs_grad || grads_[id].empty()) continue;
    if (node.leaf) {
      node.leaf->accumulate_grad(grads_[id]);
    } else if (node.backward) {
      node.backward(*this, id, grads_[id]);
    }
  }
}

const std::vector<double>& Graph::grad_of(Var v) const {
  static const std::vector<double> kEmpty;
  if (v.id() >= grads_.size()) return kEmpty;
  return grads_[v.id()];
}

Var Graph::gradient(Var output, Var wrt) {
  if (output.size() != 1) throw ShapeError("gradient: output must be scalar");
  const std::size_t top = output.id();
  const std::size_t base = wrt.id();
  if (base > top) return constant(Tensor(wrt.shape(), 0.0));

  std::vector<char> depends(top + 1, 0);
  depends[base] = 1;
  for (std::size_t id = base + 1; id <= top; ++id) {
    for (auto in : nodes_[id].inputs) {
      if (depends[in]) {
        depends[id] = 1;
        break;
      }
    }
  }
  if (!depends[top]) return constant(Tensor(wrt.shape(), 0.0));

  std::vector<Var> cotangent(top + 1);
  cotangent[top] = constant(Tensor(nodes_[top].shape, 1.0));
  for (std::size_t id = top; id > base; --id) {
    if (!depends[id] || !cotangent[id].valid()) continue;
    const SymbolicVjpFn fn = nodes_[id].symbolic;
    const std::vector<std::size_t> inputs = nodes_[id].inputs;
    if (!fn) {
      throw std::logic_error("gradient: op '" + nodes_[id].op + "' does not support nested differentiation");
    }
    std::vector<char> wanted(inputs.size(), 0);
    for (std::size_t k = 0; k < inputs.size(); ++k) wanted[k] = depends[inputs[k]];
    auto parts = fn(*this, id, cotangent[id], wanted);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      const auto in = inputs[k];
      if (!depends[in] || k >= parts.size() || !parts[k].valid()) continue;
      cotangent[in] = cotangent[in].valid() ? add(cotangent[in], parts[k]) : parts[k];
    }
  }
  return cotangent[base].valid() ? cotangent[base] : constant(Tensor(wrt.shape(), 0.0));
}

}  // namespace facevox::core
