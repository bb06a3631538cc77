#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "facevox/core/graph.hpp"
#include "facevox/core/tensor.hpp"
#include "facevox/geometry/types.hpp"

namespace facevox::model {

/// Network shape. Every strided layer uses 5x5 kernels with stride 2, so
/// the encoder needs log2(view_size) layers to reach a 1x1 bottleneck and
/// the decoder the same number of transpose convolutions to come back.
struct ModelConfig {
  std::string preset = "desk";
  std::size_t view_size = 32;
  std::size_t grid_size = 32;
  std::vector<std::size_t> encoder_channels{16, 32, 64, 64, 128};
  std::vector<std::size_t> decoder_channels{16, 16, 32, 32, 64};
  double leaky_slope = 0.2;
  bool attention = true;

  static constexpr int kKernel = 5;
  static constexpr int kStride = 2;
  static constexpr int kPad = 2;
  static constexpr int kOutPad = 1;

  /// Throws std::invalid_argument describing the first violated rule.
  void validate() const;
  std::size_t levels() const { return encoder_channels.size(); }

  static ModelConfig paper();
  static ModelConfig desk();
  /// "paper" or "desk"; anything else throws std::invalid_argument.
  static ModelConfig from_preset(const std::string& name);
};

struct NamedTensor {
  std::string name;
  core::Tensor tensor;
};

/// Ordered, uniquely named parameter tensors. Addresses stay stable after
/// insertion, so graphs may hold references while a pass is recorded.
class NetworkParams {
 public:
  core::Tensor& add(const std::string& name, core::Shape shape);
  core::Tensor* find(const std::string& name);
  const core::Tensor* find(const std::string& name) const;
  core::Tensor& at(const std::string& name);
  const core::Tensor& at(const std::string& name) const;

  std::deque<NamedTensor>& entries() { return entries_; }
  const std::deque<NamedTensor>& entries() const { return entries_; }
  std::size_t tensor_count() const { return entries_.size(); }
  /// Total number of scalars.
  std::size_t scalar_count() const;

  void set_requires_grad(bool on);
  void zero_grad();

 private:
  std::deque<NamedTensor> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Resolves parameter names to graph leaves, binding each tensor at most
/// once per graph. Trainable bindings accumulate gradients into the
/// tensors; frozen bindings record copies as constants.
class ParamBinding {
 public:
  static ParamBinding trainable(core::Graph& g, NetworkParams& params);
  static ParamBinding frozen(core::Graph& g, const NetworkParams& params);

  core::Var operator()(const std::string& name);
  core::Graph& graph() const { return *graph_; }

 private:
  ParamBinding(core::Graph& g, NetworkParams* mut, const NetworkParams* fixed)
      : graph_(&g), mutable_(mut), fixed_(fixed) {}

  core::Graph* graph_;
  NetworkParams* mutable_;
  const NetworkParams* fixed_;
  std::unordered_map<std::string, core::Var> bound_;
};

// ---------------------------------------------------------------------------

/// Gaussian weights with std sqrt(2 / fan_in), zero biases. Each tensor
/// draws from its own stream keyed by (seed, name), so adding or removing
/// the attention blocks leaves every other tensor unchanged.
NetworkParams build_generator(const ModelConfig& config, std::uint64_t seed);
NetworkParams build_critic(const ModelConfig& config, std::uint64_t seed);

struct AttentionResult {
  core::Var output;
  core::Var weights;  // H*W spatial map or C channel vector, summing to 1
};

/// out[c, p] = f[c, p] * softmax_p(w2 * (w1 * f + b1) + b2)[p]; the two
/// convolutions are 1x1 with C/8 and 1 output channels.
AttentionResult spatial_attention(core::Var f, core::Var w1, core::Var b1, core::Var w2, core::Var b2);

/// out[c] = f[c] * softmax_c(w2 * (w1 * maxpool(f) + b1) + b2)[c]; the two
/// convolutions are 1x1 with C/4 and C output channels.
AttentionResult channel_attention(core::Var f, core::Var w1, core::Var b1, core::Var w2, core::Var b2);

/// depth: 1 x V x V. Returns grid_size x V x V occupancy probabilities,
/// laid out like VoxelGrid (channel = depth layer).
core::Var generator_graph(const ModelConfig& config, ParamBinding& params, core::Var depth);

/// depth: 1 x V x V, grid: grid_size x V x V. Returns the unbounded score.
core::Var critic_graph(const ModelConfig& config, ParamBinding& params, core::Var depth, core::Var grid);

geometry::VoxelGrid generator_forward(const ModelConfig& config, const NetworkParams& params,
                                      const geometry::DepthView& depth);
double critic_forward(const ModelConfig& config, const NetworkParams& params, const geometry::DepthView& depth,
                      const geometry::VoxelGrid& grid);

core::Tensor depth_tensor(const geometry::DepthView& depth);
core::Tensor grid_tensor(const geometry::VoxelGrid& grid);
geometry::VoxelGrid grid_from_values(std::size_t n, const std::vector<double>& values);

}  // namespace facevox::model
