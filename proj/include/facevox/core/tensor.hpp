#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace facevox::core {

using Shape = std::vector<std::size_t>;

/// Raised when operand shapes are incompatible with an operator.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient accumulator.
///
/// Parameters of the networks are Tensors owned by NetworkParams; a Graph
/// refers to them while a forward pass is recorded and accumulates into
/// `grad` during backward.
struct Tensor {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  bool has_grad() const { return !grad.empty(); }

  double item() const;
  void zero_grad();
  /// Adds `g` into the accumulator, allocating it on first use.
  void accumulate_grad(const std::vector<double>& g);
};

}  // namespace facevox::core
