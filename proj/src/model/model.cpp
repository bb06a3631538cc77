#include "facevox/model/model.hpp"

#include <bit>
#include <cmath>
#include <random>
#include <stdexcept>

#include "facevox/core/ops.hpp"

namespace facevox::model {

using core::Graph;
using core::Shape;
using core::Tensor;
using core::Var;

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void init_gaussian(Tensor& t, std::uint64_t seed, const std::string& name, std::size_t fan_in) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fnv1a(name)), static_cast<std::uint32_t>(fnv1a(name) >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (auto& v : t.data) v = dist(rng);
}

// Kernel `name.w` with given shape and fan-in, bias `name.b` of `out` zeros.
void add_layer(NetworkParams& p, const std::string& name, Shape kernel, std::size_t fan_in, std::size_t out,
               std::uint64_t seed) {
  init_gaussian(p.add(name + ".w", std::move(kernel)), seed, name + ".w", fan_in);
  p.add(name + ".b", Shape{out});
}

std::string layer(const char* prefix, std::size_t i) { return prefix + std::to_string(i); }

void check_depth(const ModelConfig& config, const geometry::DepthView& depth) {
  if (depth.width != config.view_size || depth.height != config.view_size) {
    throw std::invalid_argument("depth view is " + std::to_string(depth.width) + "x" + std::to_string(depth.height) +
                                ", model expects " + std::to_string(config.view_size));
  }
}

}  // namespace

// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
  auto fail = [](const std::string& why) { throw std::invalid_argument("model config: " + why); };
  if (preset.empty()) fail("preset name is empty");
  if (view_size != grid_size) fail("view_size must equal grid_size");
  if (view_size < 8 || !std::has_single_bit(view_size)) fail("view_size must be a power of two >= 8");
  const auto depth = static_cast<std::size_t>(std::countr_zero(view_size));
  if (encoder_channels.size() != depth) fail("encoder needs log2(view_size) = " + std::to_string(depth) + " layers");
  if (decoder_channels.size() != depth) fail("decoder needs log2(view_size) = " + std::to_string(depth) + " layers");
  for (auto c : encoder_channels)
    if (c == 0) fail("zero encoder channel count");
  for (auto c : decoder_channels)
    if (c == 0) fail("zero decoder channel count");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) fail("leaky slope must lie in (0, 1)");
  if (attention) {
    if (encoder_channels.front() % 8 != 0) fail("spatial attention needs the first encoder width divisible by 8");
    if (decoder_channels.back() % 4 != 0) fail("channel attention needs the last decoder width divisible by 4");
  }
}

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.preset = "paper";
  c.view_size = c.grid_size = 128;
  c.encoder_channels = {64, 128, 256, 256, 512, 512, 512};
  c.decoder_channels = {32, 32, 64, 64, 128, 128, 256};
  return c;
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::from_preset(const std::string& name) {
  if (name == "paper") return paper();
  if (name == "desk") return desk();
  throw std::invalid_argument("unknown preset '" + name + "' (expected paper or desk)");
}

// ---------------------------------------------------------------------------

Tensor& NetworkParams::add(const std::string& name, Shape shape) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name " + name);
  index_.emplace(name, entries_.size());
  entries_.push_back({name, Tensor(std::move(shape))});
  return entries_.back().tensor;
}

Tensor* NetworkParams::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &entries_[it->second].tensor;
}

const Tensor* NetworkParams::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &entries_[it->second].tensor;
}

Tensor& NetworkParams::at(const std::string& name) {
  if (auto* t = find(name)) return *t;
  throw std::out_of_range("no parameter named " + name);
}

const Tensor& NetworkParams::at(const std::string& name) const {
  if (const auto* t = find(name)) return *t;
  throw std::out_of_range("no parameter named " + name);
}

std::size_t NetworkParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

void NetworkParams::set_requires_grad(bool on) {
  for (auto& e : entries_) e.tensor.requires_grad = on;
}

void NetworkParams::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

ParamBinding ParamBinding::trainable(Graph& g, NetworkParams& params) { return ParamBinding(g, &params, &params); }

ParamBinding ParamBinding::frozen(Graph& g, const NetworkParams& params) { return ParamBinding(g, nullptr, &params); }

Var ParamBinding::operator()(const std::string& name) {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  Var v = mutable_ ? graph_->parameter(mutable_->at(name)) : graph_->constant(fixed_->at(name));
  bound_.emplace(name, v);
  return v;
}

// ---------------------------------------------------------------------------

NetworkParams build_generator(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  NetworkParams p;
  const std::size_t levels = config.levels();
  const std::size_t k2 = ModelConfig::kKernel * ModelConfig::kKernel;
  const std::size_t k = ModelConfig::kKernel;

  std::size_t in = 1;
  for (std::size_t i = 0; i < levels; ++i) {
    const std::size_t out = config.encoder_channels[i];
    add_layer(p, layer("enc", i), {out, in, k, k}, in * k2, out, seed);
    if (i == 0 && config.attention) {
      add_layer(p, "sa.cv1", {out / 8, out, 1, 1}, out, out / 8, seed);
      add_layer(p, "sa.cv2", {1, out / 8, 1, 1}, out / 8, 1, seed);
    }
    in = out;
  }
  // Decoder level i upsamples to the resolution of encoder level L-2-i and
  // consumes the previous decoder output concatenated with the encoder
  // output at its own input resolution.
  for (std::size_t i = 0; i < levels; ++i) {
    const std::size_t skip = i == 0 ? 0 : config.encoder_channels[levels - 1 - i];
    const std::size_t prev = i == 0 ? config.encoder_channels.back() : config.decoder_channels[i - 1];
    const std::size_t cin = prev + skip, out = config.decoder_channels[i];
    add_layer(p, layer("dec", i), {cin, out, k, k}, cin * k2, out, seed);
  }
  const std::size_t last = config.decoder_channels.back();
  if (config.attention) {
    add_layer(p, "ca.cv1", {last / 4, last, 1, 1}, last, last / 4, seed);
    add_layer(p, "ca.cv2", {last, last / 4, 1, 1}, last / 4, last, seed);
  }
  add_layer(p, "out", {config.grid_size, last, 1, 1}, last, config.grid_size, seed);
  return p;
}

NetworkParams build_critic(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  NetworkParams p;
  const std::size_t k = ModelConfig::kKernel;
  std::size_t in = 1 + config.grid_size;
  for (std::size_t i = 0; i < config.levels(); ++i) {
    const std::size_t out = config.encoder_channels[i];
    add_layer(p, layer("crit", i), {out, in, k, k}, in * k * k, out, seed);
    in = out;
  }
  return p;
}

// ---------------------------------------------------------------------------

AttentionResult spatial_attention(Var f, Var w1, Var b1, Var w2, Var b2) {
  const Shape& s = f.shape();
  if (s.size() != 3) throw core::ShapeError("spatial_attention: expected C x H x W");
  if (s[0] % 8 != 0) throw std::invalid_argument("spatial_attention: channel count not divisible by 8");
  Var logits = core::conv2d(core::conv2d(f, w1, b1, 1, 0), w2, b2, 1, 0);
  Var map = core::softmax(core::reshape(logits, {s[1] * s[2]}), 0);
  return {core::scale_positions(f, map), map};
}

AttentionResult channel_attention(Var f, Var w1, Var b1, Var w2, Var b2) {
  const Shape& s = f.shape();
  if (s.size() != 3) throw core::ShapeError("channel_attention: expected C x H x W");
  if (s[0] % 4 != 0) throw std::invalid_argument("channel_attention: channel count not divisible by 4");
  Var pooled = core::global_max_pool(f);
  Var logits = core::conv2d(core::conv2d(pooled, w1, b1, 1, 0), w2, b2, 1, 0);
  Var weights = core::softmax(core::reshape(logits, {s[0]}), 0);
  return {core::scale_channels(f, weights), weights};
}

Var generator_graph(const ModelConfig& config, ParamBinding& p, Var depth) {
  const std::size_t v = config.view_size;
  if (depth.shape() != Shape{1, v, v}) {
    throw core::ShapeError("generator: input " + core::to_string(depth.shape()) + ", expected " +
                           core::to_string(Shape{1, v, v}));
  }
  const std::size_t levels = config.levels();
  const double slope = config.leaky_slope;
  constexpr int s = ModelConfig::kStride, pad = ModelConfig::kPad, op = ModelConfig::kOutPad;

  std::vector<Var> skips;
  Var h = depth;
  for (std::size_t i = 0; i < levels; ++i) {
    const auto name = layer("enc", i);
    h = core::leaky_relu(core::conv2d(h, p(name + ".w"), p(name + ".b"), s, pad), slope);
    if (i == 0 && config.attention) {
      h = spatial_attention(h, p("sa.cv1.w"), p("sa.cv1.b"), p("sa.cv2.w"), p("sa.cv2.b")).output;
    }
    skips.push_back(h);
  }
  for (std::size_t i = 0; i < levels; ++i) {
    if (i > 0) h = core::concat_channels(h, skips[levels - 1 - i]);
    const auto name = layer("dec", i);
    h = core::leaky_relu(core::transpose_conv2d(h, p(name + ".w"), p(name + ".b"), s, pad, op), slope);
  }
  if (config.attention) {
    h = channel_attention(h, p("ca.cv1.w"), p("ca.cv1.b"), p("ca.cv2.w"), p("ca.cv2.b")).output;
  }
  return core::sigmoid(core::conv2d(h, p("out.w"), p("out.b"), 1, 0));
}

Var critic_graph(const ModelConfig& config, ParamBinding& p, Var depth, Var grid) {
  const std::size_t v = config.view_size;
  if (depth.shape() != Shape{1, v, v} || grid.shape() != Shape{config.grid_size, v, v}) {
    throw core::ShapeError("critic: inputs " + core::to_string(depth.shape()) + " and " +
                           core::to_string(grid.shape()) + " do not match the model");
  }
  Var h = core::concat_channels(depth, grid);
  for (std::size_t i = 0; i < config.levels(); ++i) {
    const auto name = layer("crit", i);
    h = core::leaky_relu(core::conv2d(h, p(name + ".w"), p(name + ".b"), ModelConfig::kStride, ModelConfig::kPad),
                         config.leaky_slope);
  }
  return core::mean(h);
}

// ---------------------------------------------------------------------------

Tensor depth_tensor(const geometry::DepthView& depth) {
  return Tensor(Shape{1, depth.height, depth.width}, depth.values);
}

Tensor grid_tensor(const geometry::VoxelGrid& grid) { return Tensor(Shape{grid.n, grid.n, grid.n}, grid.values); }

geometry::VoxelGrid grid_from_values(std::size_t n, const std::vector<double>& values) {
  geometry::VoxelGrid g(n);
  if (values.size() != g.values.size()) throw std::invalid_argument("grid_from_values: size mismatch");
  g.values = values;
  return g;
}

geometry::VoxelGrid generator_forward(const ModelConfig& config, const NetworkParams& params,
                                      const geometry::DepthView& depth) {
  check_depth(config, depth);
  Graph g;
  auto bind = ParamBinding::frozen(g, params);
  Var out = generator_graph(config, bind, g.constant(depth_tensor(depth)));
  return grid_from_values(config.grid_size, out.value());
}

double critic_forward(const ModelConfig& config, const NetworkParams& params, const geometry::DepthView& depth,
                      const geometry::VoxelGrid& grid) {
  check_depth(config, depth);
  if (grid.n != config.grid_size) throw std::invalid_argument("critic: grid extent does not match the model");
  Graph g;
  auto bind = ParamBinding::frozen(g, params);
  return critic_graph(config, bind, g.constant(depth_tensor(depth)), g.constant(grid_tensor(grid))).item();
}

}  // namespace facevox::model
