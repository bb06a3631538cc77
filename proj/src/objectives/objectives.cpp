#include "facevox/objectives/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "facevox/core/ops.hpp"

namespace facevox::objectives {

using core::Graph;
using core::Tensor;
using core::Var;

namespace {

double clip(double y) { return std::clamp(y, kLogClip, 1.0 - kLogClip); }

double mean_of(std::span<const double> v, const char* what) {
  if (v.empty()) throw std::invalid_argument(std::string(what) + ": no scores");
  return core::pairwise_sum(v.data(), v.size()) / static_cast<double>(v.size());
}

Var mean_of(const std::vector<Var>& scores, const char* what) {
  if (scores.empty()) throw std::invalid_argument(std::string(what) + ": no scores");
  Var total = scores.front();
  for (std::size_t i = 1; i < scores.size(); ++i) total = core::add(total, scores[i]);
  return core::mul_scalar(total, 1.0 / static_cast<double>(scores.size()));
}

std::vector<double> bce_terms(std::span<const double> pred, std::span<const double> truth, double w) {
  std::vector<double> terms(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double y = clip(pred[i]);
    terms[i] = -((1.0 - w) * truth[i] * std::log(y) + w * (1.0 - truth[i]) * std::log(1.0 - y));
  }
  return terms;
}

void check_sizes(std::size_t pred, std::size_t truth) {
  if (pred != truth) throw core::ShapeError("weighted_bce: prediction and truth sizes differ");
}

}  // namespace

void LossWeights::validate() const {
  for (double v : {alpha, beta, gamma, lambda_gp}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("loss weights must be finite and non-negative");
  }
}

NonFiniteLoss::NonFiniteLoss(const std::string& term, double value)
    : std::runtime_error("loss term " + term + " is not finite (" + std::to_string(value) + ")"), term_(term) {}

double gen_adversarial_loss(std::span<const double> scores) { return -mean_of(scores, "gen_adversarial_loss"); }

Var gen_adversarial_loss(const std::vector<Var>& scores) {
  return core::mul_scalar(mean_of(scores, "gen_adversarial_loss"), -1.0);
}

double critic_loss(std::span<const double> d_fake, std::span<const double> d_real, double penalty) {
  return mean_of(d_fake, "critic_loss") - mean_of(d_real, "critic_loss") + penalty;
}

Var critic_loss(Var d_fake, Var d_real, Var penalty) { return core::add(core::sub(d_fake, d_real), penalty); }

Tensor interpolate(const Tensor& fake, const Tensor& real, double eps) {
  if (fake.shape != real.shape) throw core::ShapeError("gradient_penalty: fake and real grids differ in shape");
  if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("gradient_penalty: eps outside [0, 1]");
  Tensor mix(fake.shape);
  for (std::size_t i = 0; i < mix.size(); ++i) mix.data[i] = eps * real.data[i] + (1.0 - eps) * fake.data[i];
  return mix;
}

Var gradient_penalty(Graph& g, const CriticFn& critic, const Tensor& fake, const Tensor& real, double eps,
                     double lambda) {
  Var mix = g.input(interpolate(fake, real, eps));
  Var score = critic(mix);
  Var slope = core::l2_norm(g.gradient(score, mix));
  return core::mul_scalar(core::square(core::add_scalar(slope, -1.0)), lambda);
}

double occupancy_ratio(std::span<const double> truth) {
  if (truth.empty()) throw std::invalid_argument("weighted_bce: empty ground truth");
  std::size_t occupied = 0;
  for (double t : truth) {
    if (t == 1.0) {
      ++occupied;
    } else if (t != 0.0) {
      throw std::invalid_argument("weighted_bce: ground truth must be binary");
    }
  }
  return static_cast<double>(occupied) / static_cast<double>(truth.size());
}

double weighted_bce(std::span<const double> pred, std::span<const double> truth) {
  check_sizes(pred.size(), truth.size());
  const auto terms = bce_terms(pred, truth, occupancy_ratio(truth));
  return core::pairwise_sum(terms.data(), terms.size());
}

Var weighted_bce(Var pred, std::span<const double> truth) {
  check_sizes(pred.size(), truth.size());
  const double w = occupancy_ratio(truth);
  const auto terms = bce_terms(pred.value(), truth, w);
  std::vector<double> t(truth.begin(), truth.end());
  auto backward = [w, t = std::move(t)](Graph& g, std::size_t self, std::span<const double> gout) {
    const auto pid = g.node(self).inputs[0];
    if (!g.needs_grad(pid)) return;
    const auto& y = g.node(pid).value;
    auto& dy = g.grad_buffer(pid);
    for (std::size_t i = 0; i < y.size(); ++i) {
      // The clip is flat outside its range.
      if (y[i] < kLogClip || y[i] > 1.0 - kLogClip) continue;
      dy[i] += gout[0] * (-(1.0 - w) * t[i] / y[i] + w * (1.0 - t[i]) / (1.0 - y[i]));
    }
  };
  return pred.graph().record("weighted_bce", core::Shape{1}, {core::pairwise_sum(terms.data(), terms.size())}, {pred},
                             backward);
}

double sparsity_loss(std::span<const double> pred) {
  std::vector<double> mag(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) mag[i] = std::abs(pred[i]);
  return core::pairwise_sum(mag.data(), mag.size());
}

Var sparsity_loss(Var pred) { return core::sum(pred); }

TotalLosses total_losses(const LossWeights& w, const LossParts& parts) {
  const std::pair<const char*, double> named[] = {
      {"adversarial (generator)", parts.adv_g},
      {"weighted cross-entropy", parts.ce},
      {"sparsity", parts.sparse},
      {"adversarial (critic)", parts.adv_d},
  };
  for (const auto& [name, value] : named) {
    if (!std::isfinite(value)) throw NonFiniteLoss(name, value);
  }
  return {w.alpha * parts.adv_g + w.beta * parts.ce + w.gamma * parts.sparse, parts.adv_d};
}

Var generator_objective(const LossWeights& w, Var adv_g, Var ce, Var sparse) {
  Var total = core::add(core::mul_scalar(adv_g, w.alpha), core::mul_scalar(ce, w.beta));
  return core::add(total, core::mul_scalar(sparse, w.gamma));
}

}  // namespace facevox::objectives
