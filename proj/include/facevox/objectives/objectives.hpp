#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "facevox/core/graph.hpp"
#include "facevox/core/tensor.hpp"

namespace facevox::objectives {

struct LossWeights {
  double alpha = 20.0;      // adversarial
  double beta = 100.0;      // weighted cross-entropy
  double gamma = 20.0;      // sparsity
  double lambda_gp = 5.0;   // gradient penalty

  void validate() const;
};

/// Predictions are clipped to [kLogClip, 1 - kLogClip] before taking logs.
inline constexpr double kLogClip = 1e-7;

/// A loss term evaluated to NaN or infinity. `term()` names it.
class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(const std::string& term, double value);
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

/// -mean(scores). Throws std::invalid_argument on an empty list.
double gen_adversarial_loss(std::span<const double> scores);
core::Var gen_adversarial_loss(const std::vector<core::Var>& scores);

/// mean(d_fake) - mean(d_real) + penalty.
double critic_loss(std::span<const double> d_fake, std::span<const double> d_real, double penalty);
core::Var critic_loss(core::Var d_fake, core::Var d_real, core::Var penalty);

/// Scores a grid (same shape as the interpolate). The depth view it is
/// conditioned on is captured by the closure.
using CriticFn = std::function<core::Var(core::Var grid)>;

/// lambda * (||dD/dy'|| - 1)^2 at y' = eps * real + (1 - eps) * fake, with
/// one norm over all grid entries. The interpolate is recorded as a graph
/// input; the result stays differentiable with respect to whatever the
/// critic closure binds as trainable.
core::Var gradient_penalty(core::Graph& g, const CriticFn& critic, const core::Tensor& fake, const core::Tensor& real,
                           double eps, double lambda);

/// Interpolate used by gradient_penalty, exposed for inspection.
core::Tensor interpolate(const core::Tensor& fake, const core::Tensor& real, double eps);

/// Occupied fraction of a binary grid. Throws std::invalid_argument when a
/// value is neither 0 nor 1.
double occupancy_ratio(std::span<const double> truth);

/// -sum_i [(1 - w) t_i log y_i + w (1 - t_i) log(1 - y_i)] with w the
/// occupied fraction of t, y clipped. A sum over voxels, not a mean.
double weighted_bce(std::span<const double> pred, std::span<const double> truth);
core::Var weighted_bce(core::Var pred, std::span<const double> truth);

/// sum_i |y_i|; predictions are non-negative so this is the plain sum.
double sparsity_loss(std::span<const double> pred);
core::Var sparsity_loss(core::Var pred);

struct LossParts {
  double adv_g = 0.0;
  double ce = 0.0;
  double sparse = 0.0;
  double adv_d = 0.0;
};

struct TotalLosses {
  double generator = 0.0;
  double critic = 0.0;
};

/// generator = alpha * adv_g + beta * ce + gamma * sparse; critic = adv_d.
/// Throws NonFiniteLoss naming the first non-finite part.
TotalLosses total_losses(const LossWeights& w, const LossParts& parts);

/// Recorded form of the generator objective.
core::Var generator_objective(const LossWeights& w, core::Var adv_g, core::Var ce, core::Var sparse);

}  // namespace facevox::objectives
