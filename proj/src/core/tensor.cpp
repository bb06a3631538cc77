#include "facevox/core/tensor.hpp"

#include <sstream>

namespace facevox::core {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(numel(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (numel(shape) != data.size()) {
    throw ShapeError("tensor of shape " + to_string(shape) + " cannot hold " +
                     std::to_string(data.size()) + " values");
  }
}

double Tensor::item() const {
  if (data.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape));
  return data[0];
}

void Tensor::zero_grad() { grad.assign(data.size(), 0.0); }

void Tensor::accumulate_grad(const std::vector<double>& g) {
  if (g.size() != data.size()) throw ShapeError("gradient size mismatch");
  if (grad.empty()) grad.assign(data.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

}  // namespace facevox::core
