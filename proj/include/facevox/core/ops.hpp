#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "facevox/core/graph.hpp"
#include "facevox/core/tensor.hpp"

namespace facevox::core {

// Feature maps are C x H x W, row-major. Convolutions use the
// cross-correlation convention (no kernel flip).
//
// conv2d kernels are C_out x C_in x kh x kw. transpose_conv2d is the
// adjoint of conv2d with the same kernel tensor, so its kernels are laid
// out C_in x C_out x kh x kw from the point of view of its own input.

struct ConvGeometry {
  int stride = 1;
  int pad = 0;
  int out_pad = 0;  // transpose convolution only; must be < stride
};

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, int stride, int pad);
std::size_t transpose_conv_out_extent(std::size_t in, std::size_t kernel, int stride, int pad, int out_pad);

enum class Activation { kLeakyRelu, kSigmoid };

// ---------------------------------------------------------------------------
// Eager versions on plain tensors. Same arithmetic as the recorded ops.

Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor* bias, int stride, int pad);
Tensor transpose_conv2d(const Tensor& x, const Tensor& k, const Tensor* bias, int stride, int pad, int out_pad);
Tensor pointwise(const Tensor& x, Activation kind, double slope = 0.2);
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor global_max_pool(const Tensor& x);
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count);

// ---------------------------------------------------------------------------
// Recorded ops. A default-constructed (invalid) bias Var means "no bias".

Var conv2d(Var x, Var k, Var bias, int stride, int pad);
Var transpose_conv2d(Var x, Var k, Var bias, int stride, int pad, int out_pad);
Var leaky_relu(Var x, double slope);
Var sigmoid(Var x);
Var pointwise(Var x, Activation kind, double slope = 0.2);
Var softmax(Var x, std::size_t axis);
/// C x H x W -> C x 1 x 1, maximum of each channel plane. Ties route the
/// gradient to the first maximal position.
Var global_max_pool(Var x);
Var concat_channels(Var a, Var b);
Var slice_channels(Var x, std::size_t begin, std::size_t count);
/// out[c, p] = x[c, p] * w[c]; w holds C values in any shape.
Var scale_channels(Var x, Var w);
/// out[c, p] = x[c, p] * m[p]; m holds H*W values in any shape.
Var scale_positions(Var x, Var m);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var mul_scalar(Var a, double s);
Var add_scalar(Var a, double s);
/// Elementwise product with a non-differentiable constant.
Var mul_const(Var a, std::vector<double> c);
Var square(Var a);
Var sum(Var a);
Var mean(Var a);
/// Euclidean norm of all entries. The gradient at the origin is taken as 0.
Var l2_norm(Var a);
Var reshape(Var a, Shape shape);
/// Broadcasts a single-element value to `shape`.
Var expand(Var scalar, Shape shape);

/// Summation with a fixed pairwise reduction tree; used by every reducing op
/// so results do not depend on call site.
double pairwise_sum(const double* v, std::size_t n);

// ---------------------------------------------------------------------------
// Finite-difference verification.

struct GradCheckResult {
  std::vector<double> analytic;
  std::vector<double> numeric;
  double max_rel_error = 0.0;
};

/// max_i |a_i - n_i| / max(1, |a_i|, |n_i|)
double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

using ScalarFn = std::function<Var(Graph&, Var)>;

/// Compares backward() against central differences of `fn` around `point`.
GradCheckResult grad_check(const ScalarFn& fn, const Tensor& point, double eps = 1e-5);

/// Same comparison over every entry of a set of parameter tensors that the
/// closure binds into its graph via Graph::parameter.
GradCheckResult grad_check_params(const std::function<Var(Graph&)>& fn, const std::vector<Tensor*>& params,
                                  double eps = 1e-5);

}  // namespace facevox::core
