#include "facevox/core/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

namespace facevox::core {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

// Geometry of a cross-correlation from an "image" (channels x h x w) to a
// grid of output positions (ho x wo). conv2d reads the image; the transpose
// writes it.
struct Patch {
  std::size_t channels, h, w;
  std::size_t kh, kw;
  std::size_t ho, wo;
  int stride, pad;

  std::size_t rows() const { return channels * kh * kw; }
  std::size_t cols() const { return ho * wo; }
};

void im2col(const double* img, const Patch& d, double* cols) {
  const std::size_t ncols = d.cols();
  for (std::size_t c = 0; c < d.channels; ++c) {
    for (std::size_t i = 0; i < d.kh; ++i) {
      for (std::size_t j = 0; j < d.kw; ++j) {
        double* row = cols + ((c * d.kh + i) * d.kw + j) * ncols;
        for (std::size_t oy = 0; oy < d.ho; ++oy) {
          const long iy = static_cast<long>(oy) * d.stride - d.pad + static_cast<long>(i);
          double* dst = row + oy * d.wo;
          if (iy < 0 || iy >= static_cast<long>(d.h)) {
            std::fill(dst, dst + d.wo, 0.0);
            continue;
          }
          const double* src = img + (c * d.h + static_cast<std::size_t>(iy)) * d.w;
          for (std::size_t ox = 0; ox < d.wo; ++ox) {
            const long ix = static_cast<long>(ox) * d.stride - d.pad + static_cast<long>(j);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(d.w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im(const double* cols, const Patch& d, double* img) {
  const std::size_t ncols = d.cols();
  for (std::size_t c = 0; c < d.channels; ++c) {
    for (std::size_t i = 0; i < d.kh; ++i) {
      for (std::size_t j = 0; j < d.kw; ++j) {
        const double* row = cols + ((c * d.kh + i) * d.kw + j) * ncols;
        for (std::size_t oy = 0; oy < d.ho; ++oy) {
          const long iy = static_cast<long>(oy) * d.stride - d.pad + static_cast<long>(i);
          if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
          double* dst = img + (c * d.h + static_cast<std::size_t>(iy)) * d.w;
          const double* src = row + oy * d.wo;
          for (std::size_t ox = 0; ox < d.wo; ++ox) {
            const long ix = static_cast<long>(ox) * d.stride - d.pad + static_cast<long>(j);
            if (ix >= 0 && ix < static_cast<long>(d.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

std::vector<double> im2col(const std::vector<double>& img, const Patch& d) {
  std::vector<double> cols(d.rows() * d.cols());
  im2col(img.data(), d, cols.data());
  return cols;
}

void require_rank(const Var& v, std::size_t rank, const char* op, const char* what) {
  if (v.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                     to_string(v.shape()));
  }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

void check_bias(const Var& bias, std::size_t channels, const char* op) {
  if (bias.valid() && bias.size() != channels) {
    throw ShapeError(std::string(op) + ": bias has " + std::to_string(bias.size()) + " entries, expected " +
                     std::to_string(channels));
  }
}

[[noreturn]] void no_nested(const char* op, const char* what) {
  throw std::logic_error(std::string("gradient: nested differentiation of ") + op + " with respect to its " + what +
                         " is not supported");
}

void add_bias_backward(Graph& g, std::size_t bias_id, std::span<const double> gout, std::size_t channels,
                       std::size_t plane) {
  if (!g.needs_grad(bias_id)) return;
  auto& db = g.grad_buffer(bias_id);
  for (std::size_t c = 0; c < channels; ++c) db[c] += pairwise_sum(gout.data() + c * plane, plane);
}

Tensor eager(const std::function<Var(Graph&)>& build) {
  Graph g;
  return build(g).tensor();
}

}  // namespace

double pairwise_sum(const double* v, std::size_t n) {
  if (n <= 16) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, int stride, int pad) {
  if (stride <= 0) throw std::invalid_argument("conv2d: stride must be positive");
  if (pad < 0) throw std::invalid_argument("conv2d: pad must be non-negative");
  const long padded = static_cast<long>(in) + 2L * pad;
  if (static_cast<long>(kernel) > padded) {
    throw ShapeError("conv2d: kernel extent " + std::to_string(kernel) + " exceeds padded input " +
                     std::to_string(padded));
  }
  return static_cast<std::size_t>((padded - static_cast<long>(kernel)) / stride + 1);
}

std::size_t transpose_conv_out_extent(std::size_t in, std::size_t kernel, int stride, int pad, int out_pad) {
  if (stride <= 0) throw std::invalid_argument("transpose_conv2d: stride must be positive");
  if (pad < 0 || out_pad < 0) throw std::invalid_argument("transpose_conv2d: negative padding");
  if (out_pad >= stride) throw std::invalid_argument("transpose_conv2d: out_pad must be smaller than stride");
  if (in == 0) throw ShapeError("transpose_conv2d: empty input");
  const long out = (static_cast<long>(in) - 1) * stride - 2L * pad + static_cast<long>(kernel) + out_pad;
  if (out <= 0) throw ShapeError("transpose_conv2d: non-positive output extent");
  return static_cast<std::size_t>(out);
}

// ---------------------------------------------------------------------------
// Convolutions

Var conv2d(Var x, Var k, Var bias, int stride, int pad) {
  require_rank(x, 3, "conv2d", "input");
  require_rank(k, 4, "conv2d", "kernel");
  const auto& xs = x.shape();
  const auto& ks = k.shape();
  if (ks[1] != xs[0]) {
    throw ShapeError("conv2d: input has " + std::to_string(xs[0]) + " channels but kernel expects " +
                     std::to_string(ks[1]));
  }
  check_bias(bias, ks[0], "conv2d");
  const Patch d{xs[0], xs[1], xs[2], ks[2], ks[3], conv_out_extent(xs[1], ks[2], stride, pad),
                conv_out_extent(xs[2], ks[3], stride, pad), stride, pad};
  const std::size_t cout = ks[0];

  const auto cols = im2col(x.value(), d);
  std::vector<double> out(cout * d.cols());
  MatMap(out.data(), cout, d.cols()).noalias() =
      ConstMatMap(k.value().data(), cout, d.rows()) * ConstMatMap(cols.data(), d.rows(), d.cols());
  if (bias.valid()) {
    const auto& b = bias.value();
    for (std::size_t c = 0; c < cout; ++c)
      for (std::size_t p = 0; p < d.cols(); ++p) out[c * d.cols() + p] += b[c];
  }

  const bool has_bias = bias.valid();
  std::vector<Var> inputs{x, k};
  if (has_bias) inputs.push_back(bias);

  auto backward = [d, cout, has_bias](Graph& g, std::size_t self, std::span<const double> gout) {
    const Node& n = g.node(self);
    const auto xid = n.inputs[0], kid = n.inputs[1];
    ConstMatMap G(gout.data(), cout, d.cols());
    if (g.needs_grad(kid)) {
      const auto cols = im2col(g.node(xid).value, d);
      MatMap(g.grad_buffer(kid).data(), cout, d.rows()).noalias() +=
          G * ConstMatMap(cols.data(), d.rows(), d.cols()).transpose();
    }
    if (g.needs_grad(xid)) {
      RowMat dcols = ConstMatMap(g.node(kid).value.data(), cout, d.rows()).transpose() * G;
      col2im(dcols.data(), d, g.grad_buffer(xid).data());
    }
    if (has_bias) add_bias_backward(g, n.inputs[2], gout, cout, d.cols());
  };

  auto symbolic = [d](Graph& g, std::size_t self, Var gout, const std::vector<char>& wanted) {
    const Node& n = g.node(self);
    for (std::size_t i = 1; i < wanted.size(); ++i)
      if (wanted[i]) no_nested("conv2d", i == 1 ? "kernel" : "bias");
    std::vector<Var> parts(n.inputs.size());
    const int out_pad = static_cast<int>(d.h) - ((static_cast<int>(d.ho) - 1) * d.stride - 2 * d.pad +
                                                 static_cast<int>(d.kh));
    parts[0] = transpose_conv2d(gout, Var(&g, n.inputs[1]), Var(), d.stride, d.pad, out_pad);
    return parts;
  };

  return x.graph().record("conv2d", Shape{cout, d.ho, d.wo}, std::move(out), inputs, backward, symbolic);
}

Var transpose_conv2d(Var x, Var k, Var bias, int stride, int pad, int out_pad) {
  require_rank(x, 3, "transpose_conv2d", "input");
  require_rank(k, 4, "transpose_conv2d", "kernel");
  const auto& xs = x.shape();
  const auto& ks = k.shape();
  if (ks[0] != xs[0]) {
    throw ShapeError("transpose_conv2d: input has " + std::to_string(xs[0]) + " channels but kernel expects " +
                     std::to_string(ks[0]));
  }
  const std::size_t cout = ks[1];
  check_bias(bias, cout, "transpose_conv2d");
  const std::size_t oh = transpose_conv_out_extent(xs[1], ks[2], stride, pad, out_pad);
  const std::size_t ow = transpose_conv_out_extent(xs[2], ks[3], stride, pad, out_pad);
  // The output is the image of a conv2d whose output grid is the input.
  const Patch d{cout, oh, ow, ks[2], ks[3], xs[1], xs[2], stride, pad};
  const std::size_t cin = xs[0];

  RowMat cols = ConstMatMap(k.value().data(), cin, d.rows()).transpose() *
                ConstMatMap(x.value().data(), cin, d.cols());
  std::vector<double> out(cout * oh * ow, 0.0);
  col2im(cols.data(), d, out.data());
  if (bias.valid()) {
    const auto& b = bias.value();
    for (std::size_t c = 0; c < cout; ++c)
      for (std::size_t p = 0; p < oh * ow; ++p) out[c * oh * ow + p] += b[c];
  }

  const bool has_bias = bias.valid();
  std::vector<Var> inputs{x, k};
  if (has_bias) inputs.push_back(bias);

  auto backward = [d, cin, has_bias](Graph& g, std::size_t self, std::span<const double> gout) {
    const Node& n = g.node(self);
    const auto xid = n.inputs[0], kid = n.inputs[1];
    std::vector<double> gcols(d.rows() * d.cols());
    im2col(gout.data(), d, gcols.data());
    ConstMatMap GC(gcols.data(), d.rows(), d.cols());
    if (g.needs_grad(kid)) {
      MatMap(g.grad_buffer(kid).data(), cin, d.rows()).noalias() +=
          ConstMatMap(g.node(xid).value.data(), cin, d.cols()) * GC.transpose();
    }
    if (g.needs_grad(xid)) {
      MatMap(g.grad_buffer(xid).data(), cin, d.cols()).noalias() +=
          ConstMatMap(g.node(kid).value.data(), cin, d.rows()) * GC;
    }
    if (has_bias) add_bias_backward(g, n.inputs[2], gout, d.channels, d.h * d.w);
  };

  auto symbolic = [d](Graph& g, std::size_t self, Var gout, const std::vector<char>& wanted) {
    const Node& n = g.node(self);
    for (std::size_t i = 1; i < wanted.size(); ++i)
      if (wanted[i]) no_nested("transpose_conv2d", i == 1 ? "kernel" : "bias");
    std::vector<Var> parts(n.inputs.size());
    parts[0] = conv2d(gout, Var(&g, n.inputs[1]), Var(), d.stride, d.pad);
    return parts;
  };

  return x.graph().record("transpose_conv2d", Shape{cout, oh, ow}, std::move(out), inputs, backward, symbolic);
}

// ---------------------------------------------------------------------------
// Pointwise

Var leaky_relu(Var x, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) throw std::invalid_argument("leaky_relu: slope must lie in (0, 1)");
  const auto& xv = x.value();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] >= 0.0 ? xv[i] : slope * xv[i];

  auto backward = [slope](Graph& g, std::size_t self, std::span<const double> gout) {
    const auto xid = g.node(self).inputs[0];
    if (!g.needs_grad(xid)) return;
    const auto& xv = g.node(xid).value;
    auto& dx = g.grad_buffer(xid);
    for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += xv[i] >= 0.0 ? gout[i] : slope * gout[i];
  };
  // The slope mask is piecewise constant, so multiplying by it is exact to
  // all orders away from the kink.
  auto symbolic = [slope](Graph& g, std::size_t self, Var gout, const std::vector<char>&) {
    const auto& xv = g.node(g.node(self).inputs[0]).value;
    std::vector<double> mask(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) mask[i] = xv[i] >= 0.0 ? 1.0 : slope;
    return std::vector<Var>{mul_const(gout, std::move(mask))};
  };
  return x.graph().record("leaky_relu", x.shape(), std::move(out), {x}, backward, symbolic);
}

Var sigmoid(Var x) {
  const auto& xv = x.value();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    // Branch keeps exp() from overflowing for large |x|.
    const double v = xv[i];
    if (v >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  auto backward = [](Graph& g, std::size_t self, std::span<const double> gout) {
    const auto xid = g.node(self).inputs[0];
    if (!g.needs_grad(xid)) return;
    const auto& y = g.node(self).value;
    auto& dx = g.grad_buffer(xid);
    for (std::size_t i = 0; i < y.size(); ++i) dx[i] += gout[i] * y[i] * (1.0 - y[i]);
  };
  auto symbolic = [](Graph& g, std::size_t self, Var gout, const std::vector<char>&) {
    Var y(&g, self);
    Var dy = mul(y, add_scalar(mul_scalar(y, -1.0), 1.0));
    return std::vector<Var>{mul(gout, dy)};
  };
  return x.graph().record("sigmoid", x.shape(), std::move(out), {x}, backward, symbolic);
}

Var pointwise(Var x, Activation kind, double slope) {
  return kind == Activation::kLeakyRelu ? leaky_relu(x, slope) : sigmoid(x);
}

Var softmax(Var x, std::size_t axis) {
  const auto& s = x.shape();
  if (axis >= s.size()) throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " + to_string(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];

  const auto& xv = x.value();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = xv[base];
      for (std::size_t a = 1; a < len; ++a) mx = std::max(mx, xv[base + a * inner]);
      double total = 0.0;
      for (std::size_t a = 0; a < len; ++a) {
        const double e = std::exp(xv[base + a * inner] - mx);
        out[base + a * inner] = e;
        total += e;
      }
      for (std::size_t a = 0; a < len; ++a) out[base + a * inner] /= total;
    }
  }

  auto backward = [outer, inner, len](Graph& g, std::size_t self, std::span<const double> gout) {
    const auto xid = g.node(self).inputs[0];
    if (!g.needs_grad(xid)) return;
    const auto& y = g.node(self).value;
    auto& dx = g.grad_buffer(xid);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (std::size_t a = 0; a < len; ++a) dot += gout[base + a * inner] * y[base + a * inner];
        for (std::size_t a = 0; a < len; ++a) {
          const std::size_t i = base + a * inner;
          dx[i] += y[i] * (gout[i] - dot);
        }
      }
    }
  };
  return x.graph().record("softmax", s, std::move(out), {x}, backward);
}

Var global_max_pool(Var x) {
  require_rank(x, 3, "global_max_pool", "input");
  const auto& s = x.shape();
  const std::size_t c = s[0], plane = s[1] * s[2];
  if (plane == 0) throw ShapeError("global_max_pool: empty plane");
  const auto& xv = x.value();
  std::vector<double> out(c);
  std::vector<std::size_t> argmax(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    std::size_t best = ch * plane;
    for (std::size_t p = 1; p < plane; ++p)
      if (xv[ch * plane + p] > xv[best]) best = ch * plane + p;
    argmax[ch] = best;
    out[ch] = xv[best];
  }
  auto backward = [argmax](Graph& g, std::size_t self, std::span<const double> gout) {
    const auto xid = g.node(self).inputs[0];
    if (!g.needs_grad(xid)) return;
    auto& dx = g.grad_buffer(xid);
    for (std::size_t ch = 0; ch < argmax.size(); ++ch) dx[argmax[ch]] += gout[ch];
  };
  return x.graph().record("global_max_pool", Shape{c, 1, 1}, std::move(out), {x}, backward);
}

Var concat_channels(Var a, Var b) {
  require_rank(a, 3, "concat_channels", "first operand");
  require_rank(b, 3, "concat_channels", "second operand");
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as[1] != bs[1] || as[2] != bs[2]) {
    throw ShapeError("concat_channels: spatial mismatch " + to_string(as) + " vs " + to_string(bs));
  }
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.value().begin(), a.value().end());
  out.insert(out.end(), b.value().begin(), b.value().end());
  const std::size_t na = a.size();
  const std::size_t ca = as[0], cb = bs[0];

  auto backward = [na](Graph& g, std::size_t self, std::span<const double> gout) {
    const Node& n = g.node(self);
    g.accumulate(n.inputs[0], gout.subspan(0, na));
    g.accumulate(n.inputs[1], gout.subspan(na));
  };
  auto symbolic = [ca, cb](Graph&, std::size_t, Var gout, const std::vector<char>& wanted) {
    std::vector<Var> parts(2);
    if (wanted[0]) parts[0] = slice_channels(gout, 0, ca);
    if (wanted[1]) parts[1] = slice_channels(gout, ca, cb);
    return parts;
  };
  return a.graph().record("concat_channels", Shape{ca + cb, as[1], as[2]}, std::move(out), {a, b}, backward,
                          symbolic);
}

Var slice_channels(Var x, std::size_t begin, std::size_t count) {
  require_rank(x, 3, "slice_channels", "input");
  const auto s = x.shape();
  if (begin + count > s[0] || count == 0) throw ShapeError("slice_channels: range outside " + to_string(s));
  const std::size_t plane = s[1] * s[2];
  const auto& xv = x.value();
  std::vector<double> out(xv.begin() + static_cast<long>(begin * plane),
                          xv.begin() + static_cast<long>((begin + count) * plane));
  auto backward = [begin, plane](Graph& g, std::size_t self, std::span<const double> gout) {
    const auto xid = g.node(self).inputs[0];
    if (!g.needs_grad(xid)) return;
    auto& dx = g.grad_buffer(xid);
    for (std::size_t i = 0; i < gout.size(); ++i) dx[begin * plane + i] += gout[i];
  };
  auto symbolic = [s, begin, count](Graph& g, std::size_t, Var gout, const std::vector<char>&) {
    Var full = gout;
    if (begin > 0) full = concat_channels(g.constant(Tensor(Shape{begin, s[1], s[2]})), full);
    const std::size_t after = s[0] - begin - count;
    if (after > 0) full = concat_channels(full, g.constant(Tensor(Shape{after, s[1], s[2]})));
    return std::vector<Var>{full};
  };
  return x.graph().record("slice_channels", Shape{count, s[1], s[2]}, std::move(out), {x}, backward, symbolic);
}

Var scale_channels(Var x, Var w) {
  require_rank(x, 3, "scale_channels", "input");
  const auto& s = x.shape();
  if (w.size() != s[0]) throw ShapeError("scale_channels: weight count does not match channel count");
  const std::size_t c = s[0], plane = s[1] * s[2];
  const auto& xv = x.value();
  const auto& wv = w.value();
  std::vector<double> out(xv.size());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < plane; ++p) out[ch * plane + p] = xv[ch * plane + p] * wv[ch];

  auto backward = [c, plane](Graph& g, std::size_t self, std::span<const double> gout) {
    const Node& n = g.node(self);
    const auto xid = n.inputs[0], wid = n.inputs[1];
    const auto& xv = g.node(xid).value;
    const auto& wv = g.node(wid).value;
    if (g.needs_grad(xid)) {
      auto& dx = g.grad_buffer(xid);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < plane; ++p) dx[ch * plane + p] += gout[ch * plane + p] * wv[ch];
    }
    if (g.needs_grad(wid)) {
      auto& dw = g.grad_buffer(wid);
      for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t p = 0; p < plane; ++p) acc += gout[ch * plane + p] * xv[ch * plane + p];
        dw[ch] += acc;
      }
    }
  };
  auto symbolic = [](Graph& g, std::size_t self, Var gout, const std::vector<char>& wanted) {
    if (wanted[1]) no_nested("scale_channels", "weights");
    return std::vector<Var>{scale_channels(gout, Var(&g, g.node(self).inputs[1])), Var()};
  };
  return x.graph().record("scale_channels", s, std::move(out), {x, w}, backward, symbolic);
}

Var scale_positions(Var x, Var m) {
  require_rank(x, 3, "scale_positions", "input");
  const auto& s = x.shape();
  const std::size_t c = s[0], plane = s[1] * s[2];
  if (m.size() != plane) throw ShapeError("scale_positions: map size does not match H*W");
  const auto& xv = x.value();
  const auto& mv = m.value();
  std::vector<double> out(xv.size());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < plane; ++p) out[ch * plane + p] = xv[ch * plane + p] * mv[p];

  auto backward = [c, plane](Graph& g, std::size_t self, std::span<const double> gout) {
    const Node& n = g.node(self);
    const auto xid = n.inputs[0], mid = n.inputs[1];
    const auto& xv = g.node(xid).value;
    const auto& mv = g.node(mid).value;
    if (g.needs_grad(xid)) {
      auto& dx = g.grad_buffer(xid);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < plane; ++p) dx[ch * plane + p] += gout[ch * plane + p] * mv[p];
    }
    if (g.needs_grad(mid)) {
      auto& dm = g.grad_buffer(mid);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < plane; ++p) dm[p] += gout[ch * plane + p] * xv[ch * plane + p];
    }
  };
  auto symbolic = [](Graph& g, std::size_t self, Var gout, const std::vector<char>& wanted) {
    if (wanted[1]) no_nested("scale_positions", "map");
    return std::vector<Var>{scale_positions(gout, Var(&g, g.node(self).inputs[1])), Var()};
  };
  return x.graph().record("scale_positions", s, std::move(out), {x, m}, backward, symbolic);
}

// ---------------------------------------------------------------------------
// Elementwise and reductions

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.value());
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  auto backward = [](Graph& g, std::size_t self, std::span<const double> gout) {
    const Node& n = g.node(self);
    g.accumulate(n.inputs[0], gout);
    g.accumulate(n.inputs[1], gout);
  };
  auto symbolic = [](Graph&, std::size_t, Var gout, const std::vector<char>&) {
    return std::vector<Var>{gout, gout};
  };
  return a.graph().record("add", a.shape(), std::move(out), {a, b}, backward, symbolic);
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.value());
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  auto backward = [](Graph& g, std::size_t self, std::span<const double> gout) {
    const Node& n = g.node(self);
    g.accumulate(n.inputs[0], gout);
    if (g.needs_grad(n.inputs[1])) {
      auto& db = g.grad_buffer(n.inputs[1]);
      for (std::size_t i = 0; i < gout.size(); ++i) db[i] -= gout[i];
    }
  };
  auto symbolic = [](Graph&, std::size_t, Var gout, const std::vector<char>& wanted) {
    std::vector<Var> parts{gout, Var()};
    if (wanted[1]) parts[1] = mul_scalar(gout, -1.0);
    return parts;
  };
  return a.graph().record("sub", a.shape(), std::move(out), {a, b}, backward, symbolic);
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  const auto& av = a.value();
  const auto& bv = b.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  auto backward = [](Graph& g, std::size_t self, std::span<const double> gout) {
    const Node& n = g.node(self);
    const auto aid = n.inputs[0], bid = n.inputs[1];
    if (g.needs_grad(aid)) {
      const auto& bv = g.node(bid).value;
      auto& da = g.grad_buffer(aid);
      for (std::size_t i = 0; i < gout.size(); ++i) da[i] += gout[i] * bv[i];
    }
    if (g.needs_grad(bid)) {
      const auto& av = g.node(aid).value;
      auto& db = g.grad_buffer(bid);
      for (std::size_t i = 0; i < gout.size(); ++i) db[i] += gout[i] * av[i];
    }
  };
  auto symbolic = [](Graph& g, std::size_t self, Var gout, const std::vector<char>& wanted) {
    const Node& n = g.node(self);
    std::vector<Var> parts(2);
    if (wanted[0]) parts[0] = mul(gout, Var(&g, n.inputs[1]));
    if (wanted[1]) parts[1] = mul(gout, Var(&g, n.inputs[0]));
    return parts;
  };
  return a.graph().record("mul", a.shape(), std::move(out), {a, b}, backward, symbolic);
}

Var mul_scalar(Var a, double s) {
  std::vector<double> out(a.value());
  for (auto& v : out) v *= s;
  auto backward = [s](Graph& g, std::size_t self, std::span<const double> gout) {
    const auto aid = g.node(self).inputs[0];
    if (!g.needs_grad(aid)) return;
    auto& da = g.grad_buffer(aid);
    for (std::size_t i = 0; i < gout.size(); ++i) da[i] += s * gout[i];
  };
  auto symbolic = [s](Graph&, std::size_t, Var gout, const std::vector<char>&) {
    return std::vector<Var>{mul_scalar(gout, s)};
  };
  return a.graph().record("mul_scalar", a.shape(), std::move(out), {a}, backward, symbolic);
}

Var add_scalar(Var a, double s) {
  std::vector<double> out(a.value());
  for (auto& v : out) v += s;
  auto backward = [](Graph& g, std::size_t self, std::span<const double> gout) {
    g.accumulate(g.node(self).inputs[0], gout);
  };
  auto symbolic = [](Graph&, std::size_t, Var gout, const std::vector<char>&) { return std::vector<Var>{gout}; };
  return a.graph().record("add_scalar", a.shape(), std::move(out), {a}, backward, symbolic);
}

Var mul_const(Var a, std::vector<double> c) {
  if (c.size() != a.size()) throw ShapeError("mul_const: constant size does not match operand");
  std::vector<double> out(a.value());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c[i];
  auto factors = std::make_shared<const std::vector<double>>(std::move(c));
  auto backward = [factors](Graph& g, std::size_t self, std::span<const double> gout) {
    const auto aid = g.node(self).inputs[0];
    if (!g.needs_grad(aid)) return;
    auto& da = g.grad_buffer(aid);
    const auto& f = *factors;
    for (std::size_t i = 0; i < gout.size(); ++i) da[i] += f[i] * gout[i];
  };
  auto symbolic = [factors](Graph&, std::size_t, Var gout, const std::vector<char>&) {
    return std::vector<Var>{mul_const(gout, *factors)};
  };
  return a.graph().record("mul_const", a.shape(), std::move(out), {a}, backward, symbolic);
}

Var square(Var a) {
  std::vector<double> out(a.value());
  for (auto& v : out) v *= v;
  auto backward = [](Graph& g, std::size_t self, std::span<const double> gout) {
    const auto aid = g.node(self).inputs[0];
    if (!g.needs_grad(aid)) return;
    const auto& av = g.node(aid).value;
    auto& da = g.grad_buffer(aid);
    for (std::size_t i = 0; i < gout.size(); ++i) da[i] += 2.0 * av[i] * gout[i];
  };
  auto symbolic = [](Graph& g, std::size_t self, Var gout, const std::vector<char>&) {
    return std::vector<Var>{mul(gout, mul_scalar(Var(&g, g.node(self).inputs[0]), 2.0))};
  };
  return a.graph().record("square", a.shape(), std::move(out), {a}, backward, symbolic);
}

Var sum(Var a) {
  const auto& av = a.value();
  std::vector<double> out{pairwise_sum(av.data(), av.size())};
  auto backward = [](Graph& g, std::size_t self, std::span<const double> gout) {
    const auto aid = g.node(self).inputs[0];
    if (!g.needs_grad(aid)) return;
    for (auto& v : g.grad_buffer(aid)) v += gout[0];
  };
  auto symbolic = [](Graph& g, std::size_t self, Var gout, const std::vector<char>&) {
    return std::vector<Var>{expand(gout, g.node(g.node(self).inputs[0]).shape)};
  };
  return a.graph().record("sum", Shape{1}, std::move(out), {a}, backward, symbolic);
}

Var mean(Var a) {
  const auto& av = a.value();
  if (av.empty()) throw ShapeError("mean: empty operand");
  const double inv = 1.0 / static_cast<double>(av.size());
  std::vector<double> out{pairwise_sum(av.data(), av.size()) * inv};
  auto backward = [inv](Graph& g, std::size_t self, std::span<const double> gout) {
    const auto aid = g.node(self).inputs[0];
    if (!g.needs_grad(aid)) return;
    for (auto& v : g.grad_buffer(aid)) v += gout[0] * inv;
  };
  auto symbolic = [inv](Graph& g, std::size_t self, Var gout, const std::vector<char>&) {
    return std::vector<Var>{mul_scalar(expand(gout, g.node(g.node(self).inputs[0]).shape), inv)};
  };
  return a.graph().record("mean", Shape{1}, std::move(out), {a}, backward, symbolic);
}

Var l2_norm(Var a) {
  const auto& av = a.value();
  std::vector<double> sq(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) sq[i] = av[i] * av[i];
  std::vector<double> out{std::sqrt(pairwise_sum(sq.data(), sq.size()))};
  auto backward = [](Graph& g, std::size_t self, std::span<const double> gout) {
    const auto aid = g.node(self).inputs[0];
    const double norm = g.node(self).value[0];
    if (!g.needs_grad(aid) || norm == 0.0) return;
    const auto& av = g.node(aid).value;
    auto& da = g.grad_buffer(aid);
    for (std::size_t i = 0; i < av.size(); ++i) da[i] += gout[0] * av[i] / norm;
  };
  return a.graph().record("l2_norm", Shape{1}, std::move(out), {a}, backward);
}

Var reshape(Var a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  auto backward = [](Graph& g, std::size_t self, std::span<const double> gout) {
    g.accumulate(g.node(self).inputs[0], gout);
  };
  auto symbolic = [](Graph& g, std::size_t self, Var gout, const std::vector<char>&) {
    return std::vector<Var>{reshape(gout, g.node(g.node(self).inputs[0]).shape)};
  };
  return a.graph().record("reshape", std::move(shape), a.value(), {a}, backward, symbolic);
}

Var expand(Var scalar, Shape shape) {
  if (scalar.size() != 1) throw ShapeError("expand: operand must hold one value");
  std::vector<double> out(numel(shape), scalar.value()[0]);
  auto backward = [](Graph& g, std::size_t self, std::span<const double> gout) {
    const auto sid = g.node(self).inputs[0];
    if (!g.needs_grad(sid)) return;
    g.grad_buffer(sid)[0] += pairwise_sum(gout.data(), gout.size());
  };
  auto symbolic = [](Graph& g, std::size_t self, Var gout, const std::vector<char>&) {
    return std::vector<Var>{reshape(sum(gout), g.node(g.node(self).inputs[0]).shape)};
  };
  return scalar.graph().record("expand", std::move(shape), std::move(out), {scalar}, backward, symbolic);
}

// ---------------------------------------------------------------------------
// Eager wrappers

Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor* bias, int stride, int pad) {
  return eager([&](Graph& g) {
    return conv2d(g.constant(x), g.constant(k), bias ? g.constant(*bias) : Var(), stride, pad);
  });
}

Tensor transpose_conv2d(const Tensor& x, const Tensor& k, const Tensor* bias, int stride, int pad, int out_pad) {
  return eager([&](Graph& g) {
    return transpose_conv2d(g.constant(x), g.constant(k), bias ? g.constant(*bias) : Var(), stride, pad, out_pad);
  });
}

Tensor pointwise(const Tensor& x, Activation kind, double slope) {
  return eager([&](Graph& g) { return pointwise(g.constant(x), kind, slope); });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  return eager([&](Graph& g) { return softmax(g.constant(x), axis); });
}

Tensor global_max_pool(const Tensor& x) {
  return eager([&](Graph& g) { return global_max_pool(g.constant(x)); });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  return eager([&](Graph& g) { return concat_channels(g.constant(a), g.constant(b)); });
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count) {
  return eager([&](Graph& g) { return slice_channels(g.constant(x), begin, count); });
}

// ---------------------------------------------------------------------------
// Gradient checking

double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  if (analytic.size() != numeric.size()) throw ShapeError("max_relative_error: size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    const double denom = std::max({1.0, std::abs(a), std::abs(n)});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

GradCheckResult grad_check_params(const std::function<Var(Graph&)>& fn, const std::vector<Tensor*>& params,
                                  double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
  GradCheckResult r;
  std::vector<bool> saved_flags;
  for (auto* p : params) {
    saved_flags.push_back(p->requires_grad);
    p->requires_grad = true;
    p->zero_grad();
  }
  {
    Graph g;
    Var loss = fn(g);
    g.backward(loss);
  }
  for (auto* p : params) r.analytic.insert(r.analytic.end(), p->grad.begin(), p->grad.end());

  auto evaluate = [&fn] {
    Graph g;
    return fn(g).item();
  };
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->data.size(); ++i) {
      const double orig = p->data[i];
      p->data[i] = orig + eps;
      const double up = evaluate();
      p->data[i] = orig - eps;
      const double down = evaluate();
      p->data[i] = orig;
      r.numeric.push_back((up - down) / (2.0 * eps));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->requires_grad = saved_flags[i];
  r.max_rel_error = max_relative_error(r.analytic, r.numeric);
  return r;
}

GradCheckResult grad_check(const ScalarFn& fn, const Tensor& point, double eps) {
  Tensor p = point;
  return grad_check_params([&](Graph& g) { return fn(g, g.parameter(p)); }, {&p}, eps);
}

}  // namespace facevox::core
