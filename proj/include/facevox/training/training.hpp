#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "facevox/geometry/types.hpp"
#include "facevox/model/model.hpp"
#include "facevox/objectives/objectives.hpp"

namespace facevox::training {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// Moments are stored in the order of NetworkParams::entries().
struct AdamState {
  AdamConfig hyper;
  std::uint64_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

AdamState make_adam(const model::NetworkParams& params, const AdamConfig& hyper);

/// A gradient held NaN or infinity; nothing was modified.
class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One bias-corrected Adam update from the gradients accumulated in the
/// parameter tensors. Tensors without a gradient count as zero gradient.
void adam_step(model::NetworkParams& params, AdamState& state);

/// Rounds parameters and moments to the nearest float32, the precision
/// checkpoints store. Applied after every training update so that a run
/// resumed from a checkpoint continues bit-identically.
void round_to_storage(model::NetworkParams& params, AdamState& state);

struct TrainSchedule {
  std::uint32_t critic_steps = 1;
  std::uint32_t generator_steps = 2;
  std::uint32_t batch_size = 1;
  std::uint64_t iterations = 2000;
  std::uint64_t eval_interval = 500;
  std::uint64_t seed = 1;

  /// True when the step ratio differs from 1 critic : 2 generator steps.
  bool overridden() const { return critic_steps != 1 || generator_steps != 2; }
  void validate() const;
};

struct TrainOptions {
  model::ModelConfig model;
  objectives::LossWeights weights;
  bool sparsity = true;
  AdamConfig adam;
  TrainSchedule schedule;
};

struct Sample {
  geometry::DepthView depth;
  geometry::VoxelGrid truth;
};

struct IterationLosses {
  double critic = 0.0;
  std::vector<double> generator;  // one per generator step
  std::vector<double> bce;        // weighted cross-entropy of each generator step
};

struct GeneratorLoss {
  core::Var total;
  core::Var adversarial;
  core::Var bce;
  core::Var sparsity;
};

/// The generator objective on one sample with the critic bound as given
/// (frozen during training). Sparsity is weighted by zero when disabled.
GeneratorLoss generator_loss(const TrainOptions& options, model::ParamBinding& generator,
                             model::ParamBinding& critic, const Sample& sample);

/// Non-finite loss or gradient; the trainer has been restored to its state
/// before the iteration.
class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class CheckpointErrorKind { kBadMagic, kVersion, kCrc, kTruncated, kMalformed };

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Alternating critic / generator optimization over single samples.
class Trainer {
 public:
  explicit Trainer(TrainOptions options);

  /// Critic steps with a fresh interpolation weight each, then generator
  /// steps with the critic frozen, each recomputing the generator output.
  IterationLosses train_iteration(const Sample& sample);

  /// Index of the sample used by iteration `iteration` of a dataset of
  /// `count` samples: a fresh seeded shuffle per pass over the data.
  std::size_t sample_index(std::uint64_t iteration, std::size_t count) const;

  /// Single updates as used by train_iteration, without rollback. The
  /// critic update returns the critic loss; the generator update returns
  /// the generator loss and its weighted cross-entropy part.
  double critic_step(const Sample& sample);
  std::pair<double, double> generator_step(const Sample& sample);

  const TrainOptions& options() const { return options_; }
  /// Changes the total iteration budget, e.g. to extend a resumed run.
  void set_iterations(std::uint64_t n) { options_.schedule.iterations = n; }
  std::uint64_t iteration() const { return iteration_; }
  model::NetworkParams& generator() { return generator_; }
  const model::NetworkParams& generator() const { return generator_; }
  model::NetworkParams& critic() { return critic_; }
  const model::NetworkParams& critic() const { return critic_; }
  const AdamState& generator_state() const { return gen_state_; }
  const AdamState& critic_state() const { return critic_state_; }

  std::string encode_checkpoint() const;
  void save(const std::filesystem::path& path) const;
  static Trainer decode_checkpoint(std::string_view bytes);
  static Trainer load(const std::filesystem::path& path);

 private:
  TrainOptions options_;
  model::NetworkParams generator_;
  model::NetworkParams critic_;
  AdamState gen_state_;
  AdamState critic_state_;
  std::mt19937_64 rng_;
  std::uint64_t iteration_ = 0;
};

/// Generator weights and shape from a checkpoint, for inference.
struct GeneratorBundle {
  model::ModelConfig config;
  model::NetworkParams params;
};
GeneratorBundle load_generator(const std::filesystem::path& path);

/// Key/value block written into checkpoints. Exposed for inspection.
std::map<std::string, std::string> checkpoint_metadata(std::string_view bytes);

}  // namespace facevox::training
