#include "facevox/training/training.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "facevox/core/ops.hpp"
#include "facevox/io/binary.hpp"
#include "facevox/io/formats.hpp"

namespace facevox::training {

using core::Graph;
using core::Tensor;
using core::Var;
using model::NetworkParams;
using model::ParamBinding;

// ---------------------------------------------------------------------------
// Adam

void AdamConfig::validate() const {
  if (!(lr > 0.0 && std::isfinite(lr))) throw std::invalid_argument("adam: learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("adam: beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("adam: beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("adam: eps must be positive");
}

AdamState make_adam(const NetworkParams& params, const AdamConfig& hyper) {
  hyper.validate();
  AdamState s;
  s.hyper = hyper;
  for (const auto& e : params.entries()) {
    s.m.emplace_back(e.tensor.size(), 0.0);
    s.v.emplace_back(e.tensor.size(), 0.0);
  }
  return s;
}

void adam_step(NetworkParams& params, AdamState& state) {
  auto& entries = params.entries();
  if (state.m.size() != entries.size() || state.v.size() != entries.size()) {
    throw std::invalid_argument("adam: optimizer state does not match the parameters");
  }
  if (state.t >= (std::uint64_t{1} << 31)) throw std::invalid_argument("adam: step counter exhausted");
  for (const auto& e : entries) {
    if (e.tensor.has_grad() && e.tensor.grad.size() != e.tensor.size()) {
      throw std::invalid_argument("adam: gradient of " + e.name + " has the wrong size");
    }
    for (double g : e.tensor.grad) {
      if (!std::isfinite(g)) throw NonFiniteGradient("adam: non-finite gradient in " + e.name + "; step refused");
    }
  }

  const auto& h = state.hyper;
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& tensor = entries[i].tensor;
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < tensor.size(); ++j) {
      const double g = tensor.has_grad() ? tensor.grad[j] : 0.0;
      m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g;
      v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g * g;
      tensor.data[j] -= h.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + h.eps);
    }
  }
}

void round_to_storage(NetworkParams& params, AdamState& state) {
  auto round = [](std::vector<double>& xs) {
    for (auto& x : xs) x = static_cast<double>(static_cast<float>(x));
  };
  for (auto& e : params.entries()) round(e.tensor.data);
  for (auto& m : state.m) round(m);
  for (auto& v : state.v) round(v);
}

void TrainSchedule::validate() const {
  if (critic_steps == 0 || generator_steps == 0) throw std::invalid_argument("schedule: step counts must be positive");
  if (batch_size != 1) throw std::invalid_argument("schedule: only batch size 1 is supported");
  if (eval_interval == 0) throw std::invalid_argument("schedule: eval interval must be positive");
}

// ---------------------------------------------------------------------------
// Trainer

namespace {

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t stream, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), tag};
  return std::mt19937_64(seq);
}

constexpr std::uint32_t kTrainStream = 0x74726e31;
constexpr std::uint32_t kShuffleStream = 0x73686631;

bool all_finite(double v) { return std::isfinite(v); }

}  // namespace

GeneratorLoss generator_loss(const TrainOptions& options, ParamBinding& generator, ParamBinding& critic,
                             const Sample& sample) {
  const auto& cfg = options.model;
  Graph& g = generator.graph();
  Var depth = g.constant(model::depth_tensor(sample.depth));
  Var pred = model::generator_graph(cfg, generator, depth);
  GeneratorLoss out;
  out.adversarial = objectives::gen_adversarial_loss({model::critic_graph(cfg, critic, depth, pred)});
  out.bce = objectives::weighted_bce(pred, sample.truth.values);
  out.sparsity = objectives::sparsity_loss(pred);
  auto weights = options.weights;
  if (!options.sparsity) weights.gamma = 0.0;
  out.total = objectives::generator_objective(weights, out.adversarial, out.bce, out.sparsity);
  return out;
}

Trainer::Trainer(TrainOptions options)
    : options_(std::move(options)),
      generator_(model::build_generator(options_.model, options_.schedule.seed)),
      critic_(model::build_critic(options_.model, options_.schedule.seed)),
      gen_state_(make_adam(generator_, options_.adam)),
      critic_state_(make_adam(critic_, options_.adam)),
      rng_(seeded(options_.schedule.seed, 0, kTrainStream)) {
  options_.weights.validate();
  options_.schedule.validate();
  round_to_storage(generator_, gen_state_);
  round_to_storage(critic_, critic_state_);
}

std::size_t Trainer::sample_index(std::uint64_t iteration, std::size_t count) const {
  if (count == 0) throw std::invalid_argument("sample_index: empty dataset");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = seeded(options_.schedule.seed, iteration / count, kShuffleStream);
  std::shuffle(order.begin(), order.end(), rng);
  return order[iteration % count];
}

double Trainer::critic_step(const Sample& sample) {
  const auto& cfg = options_.model;
  const Tensor fake = model::grid_tensor(model::generator_forward(cfg, generator_, sample.depth));
  const Tensor real = model::grid_tensor(sample.truth);

  critic_.zero_grad();
  critic_.set_requires_grad(true);
  Graph g;
  auto bind = ParamBinding::trainable(g, critic_);
  Var depth = g.constant(model::depth_tensor(sample.depth));
  Var d_fake = model::critic_graph(cfg, bind, depth, g.constant(fake));
  Var d_real = model::critic_graph(cfg, bind, depth, g.constant(real));
  const double eps = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
  Var penalty = objectives::gradient_penalty(
      g, [&](Var grid) { return model::critic_graph(cfg, bind, depth, grid); }, fake, real, eps,
      options_.weights.lambda_gp);
  Var loss = objectives::critic_loss(d_fake, d_real, penalty);
  if (!all_finite(loss.item())) throw objectives::NonFiniteLoss("adversarial (critic)", loss.item());

  g.backward(loss);
  adam_step(critic_, critic_state_);
  round_to_storage(critic_, critic_state_);
  return loss.item();
}

std::pair<double, double> Trainer::generator_step(const Sample& sample) {
  generator_.zero_grad();
  generator_.set_requires_grad(true);
  Graph g;
  auto gen = ParamBinding::trainable(g, generator_);
  auto crit = ParamBinding::frozen(g, critic_);
  const auto loss = generator_loss(options_, gen, crit, sample);

  auto weights = options_.weights;
  if (!options_.sparsity) weights.gamma = 0.0;
  const auto totals =
      objectives::total_losses(weights, {loss.adversarial.item(), loss.bce.item(), loss.sparsity.item(), 0.0});
  if (!all_finite(totals.generator)) throw objectives::NonFiniteLoss("generator total", totals.generator);

  g.backward(loss.total);
  adam_step(generator_, gen_state_);
  round_to_storage(generator_, gen_state_);
  return {loss.total.item(), loss.bce.item()};
}

IterationLosses Trainer::train_iteration(const Sample& sample) {
  const auto& cfg = options_.model;
  if (sample.depth.width != cfg.view_size || sample.depth.height != cfg.view_size || sample.truth.n != cfg.grid_size) {
    throw std::invalid_argument("train_iteration: sample does not match the model size");
  }
  const NetworkParams gen_before = generator_, critic_before = critic_;
  const AdamState gen_state_before = gen_state_, critic_state_before = critic_state_;
  const auto rng_before = rng_;

  IterationLosses out;
  try {
    for (std::uint32_t i = 0; i < options_.schedule.critic_steps; ++i) out.critic = critic_step(sample);
    for (std::uint32_t i = 0; i < options_.schedule.generator_steps; ++i) {
      const auto [loss, bce] = generator_step(sample);
      out.generator.push_back(loss);
      out.bce.push_back(bce);
    }
  } catch (const std::runtime_error& e) {
    const bool numeric = dynamic_cast<const objectives::NonFiniteLoss*>(&e) != nullptr ||
                         dynamic_cast<const NonFiniteGradient*>(&e) != nullptr;
    if (!numeric) throw;
    generator_ = gen_before;
    critic_ = critic_before;
    gen_state_ = gen_state_before;
    critic_state_ = critic_state_before;
    rng_ = rng_before;
    throw TrainingAborted("iteration " + std::to_string(iteration_) + " aborted and rolled back: " + e.what());
  }
  ++iteration_;
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::string_view kMagic = "AGCK";

std::string join(const std::vector<std::size_t>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + std::to_string(xs[i]);
  return out;
}

std::vector<std::size_t> split_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoul(item));
  return out;
}

void put_record(std::string& out, const std::string& name, const core::Shape& shape, const std::vector<double>& data) {
  io::put_u32(out, static_cast<std::uint32_t>(name.size()));
  io::put_bytes(out, name);
  io::put_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) io::put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : data) io::put_f32(out, static_cast<float>(v));
}

struct Record {
  core::Shape shape;
  std::vector<double> data;
};

std::map<std::string, Record> read_records(io::Reader& r) {
  std::map<std::string, Record> out;
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name(r.bytes(r.u32()));
    Record rec;
    const auto rank = r.u32();
    if (rank > 8) throw CheckpointError(CheckpointErrorKind::kMalformed, "checkpoint: implausible rank in " + name);
    for (std::uint32_t k = 0; k < rank; ++k) rec.shape.push_back(r.u32());
    const auto n = core::numel(rec.shape);
    if (n * 4 > r.remaining()) throw io::FormatError("checkpoint: truncated");
    rec.data.resize(n);
    for (auto& v : rec.data) v = r.f32();
    out.emplace(name, std::move(rec));
  }
  return out;
}

void put_params(std::string& out, const NetworkParams& p, const std::string& prefix) {
  for (const auto& e : p.entries()) put_record(out, prefix + e.name, e.tensor.shape, e.tensor.data);
}

void put_moments(std::string& out, const NetworkParams& p, const AdamState& s, const std::string& prefix) {
  for (std::size_t i = 0; i < p.entries().size(); ++i) {
    const auto& e = p.entries()[i];
    put_record(out, prefix + "m." + e.name, e.tensor.shape, s.m[i]);
    put_record(out, prefix + "v." + e.name, e.tensor.shape, s.v[i]);
  }
}

const Record& take(const std::map<std::string, Record>& recs, const std::string& name, const core::Shape& shape) {
  auto it = recs.find(name);
  if (it == recs.end()) throw CheckpointError(CheckpointErrorKind::kMalformed, "checkpoint: missing record " + name);
  if (it->second.shape != shape) {
    throw CheckpointError(CheckpointErrorKind::kMalformed, "checkpoint: record " + name + " has shape " +
                                                               core::to_string(it->second.shape) + ", expected " +
                                                               core::to_string(shape));
  }
  return it->second;
}

void fill_params(NetworkParams& p, const std::map<std::string, Record>& recs, const std::string& prefix) {
  for (auto& e : p.entries()) e.tensor.data = take(recs, prefix + e.name, e.tensor.shape).data;
}

void fill_moments(const NetworkParams& p, AdamState& s, const std::map<std::string, Record>& recs,
                  const std::string& prefix) {
  for (std::size_t i = 0; i < p.entries().size(); ++i) {
    const auto& e = p.entries()[i];
    s.m[i] = take(recs, prefix + "m." + e.name, e.tensor.shape).data;
    s.v[i] = take(recs, prefix + "v." + e.name, e.tensor.shape).data;
  }
}

std::uint32_t crc_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

struct Parsed {
  std::string preset;
  std::map<std::string, Record> params;
  std::map<std::string, Record> moments;
  std::map<std::string, std::string> meta;
};

// Walks the layout; FormatError from the reader means the file ended early.
Parsed parse_layout(std::string_view body) {
  io::Reader r(body, "checkpoint");
  r.bytes(kMagic.size());
  r.u32();
  Parsed p;
  p.preset = std::string(r.bytes(r.u32()));
  p.params = read_records(r);
  p.moments = read_records(r);
  const std::string text(r.bytes(r.u32()));
  if (r.remaining() != 0) throw CheckpointError(CheckpointErrorKind::kMalformed, "checkpoint: trailing bytes");
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError(CheckpointErrorKind::kMalformed, "checkpoint: bad metadata");
    p.meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return p;
}

Parsed parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < kMagic.size()) throw CheckpointError(CheckpointErrorKind::kTruncated, "checkpoint: truncated");
  if (bytes.substr(0, kMagic.size()) != kMagic) {
    throw CheckpointError(CheckpointErrorKind::kBadMagic, "checkpoint: not a checkpoint file (bad magic)");
  }
  if (bytes.size() < kMagic.size() + 8) throw CheckpointError(CheckpointErrorKind::kTruncated, "checkpoint: truncated");
  io::Reader head(bytes.substr(kMagic.size(), 4));
  const auto version = head.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointErrorKind::kVersion, "checkpoint: format version " + std::to_string(version) +
                                                             ", this build reads " +
                                                             std::to_string(kCheckpointVersion));
  }
  const auto body = bytes.substr(0, bytes.size() - 4);
  io::Reader tail(bytes.substr(bytes.size() - 4));
  if (crc_of(body) != tail.u32()) {
    // A file that ends before its layout does is reported as truncated;
    // anything else failing the checksum is corruption.
    try {
      parse_layout(body);
    } catch (const io::FormatError&) {
      throw CheckpointError(CheckpointErrorKind::kTruncated, "checkpoint: truncated");
    } catch (const CheckpointError&) {
    }
    throw CheckpointError(CheckpointErrorKind::kCrc, "checkpoint: CRC mismatch");
  }
  try {
    return parse_layout(body);
  } catch (const io::FormatError& e) {
    throw CheckpointError(CheckpointErrorKind::kMalformed, e.what());
  }
}

const std::string& meta_at(const std::map<std::string, std::string>& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw CheckpointError(CheckpointErrorKind::kMalformed, "checkpoint: missing metadata " + key);
  return it->second;
}

double meta_double(const std::map<std::string, std::string>& meta, const std::string& key) {
  return std::stod(meta_at(meta, key));
}

std::uint64_t meta_u64(const std::map<std::string, std::string>& meta, const std::string& key) {
  return std::stoull(meta_at(meta, key));
}

model::ModelConfig config_from(const Parsed& p) {
  model::ModelConfig c;
  c.preset = p.preset;
  c.view_size = meta_u64(p.meta, "view_size");
  c.grid_size = meta_u64(p.meta, "grid_size");
  c.encoder_channels = split_sizes(meta_at(p.meta, "encoder_channels"));
  c.decoder_channels = split_sizes(meta_at(p.meta, "decoder_channels"));
  c.leaky_slope = meta_double(p.meta, "leaky_slope");
  c.attention = meta_at(p.meta, "attention") == "true";
  c.validate();
  return c;
}

}  // namespace

std::string Trainer::encode_checkpoint() const {
  const auto& o = options_;
  const auto& m = o.model;
  std::string out;
  io::put_bytes(out, kMagic);
  io::put_u32(out, kCheckpointVersion);
  io::put_u32(out, static_cast<std::uint32_t>(m.preset.size()));
  io::put_bytes(out, m.preset);

  io::put_u32(out, static_cast<std::uint32_t>(generator_.tensor_count() + critic_.tensor_count()));
  put_params(out, generator_, "G.");
  put_params(out, critic_, "D.");
  io::put_u32(out, static_cast<std::uint32_t>(2 * (generator_.tensor_count() + critic_.tensor_count())));
  put_moments(out, generator_, gen_state_, "G.");
  put_moments(out, critic_, critic_state_, "D.");

  std::ostringstream rng_text;
  rng_text << rng_;
  const std::pair<std::string, std::string> meta[] = {
      {"view_size", std::to_string(m.view_size)},
      {"grid_size", std::to_string(m.grid_size)},
      {"encoder_channels", join(m.encoder_channels)},
      {"decoder_channels", join(m.decoder_channels)},
      {"leaky_slope", io::format_double(m.leaky_slope)},
      {"attention", m.attention ? "true" : "false"},
      {"alpha", io::format_double(o.weights.alpha)},
      {"beta", io::format_double(o.weights.beta)},
      {"gamma", io::format_double(o.weights.gamma)},
      {"lambda_gp", io::format_double(o.weights.lambda_gp)},
      {"sparsity", o.sparsity ? "true" : "false"},
      {"lr", io::format_double(o.adam.lr)},
      {"beta1", io::format_double(o.adam.beta1)},
      {"beta2", io::format_double(o.adam.beta2)},
      {"adam_eps", io::format_double(o.adam.eps)},
      {"critic_steps", std::to_string(o.schedule.critic_steps)},
      {"generator_steps", std::to_string(o.schedule.generator_steps)},
      {"step_ratio_override", o.schedule.overridden() ? "true" : "false"},
      {"batch_size", std::to_string(o.schedule.batch_size)},
      {"iterations", std::to_string(o.schedule.iterations)},
      {"eval_interval", std::to_string(o.schedule.eval_interval)},
      {"seed", std::to_string(o.schedule.seed)},
      {"iteration", std::to_string(iteration_)},
      {"generator_t", std::to_string(gen_state_.t)},
      {"critic_t", std::to_string(critic_state_.t)},
      {"gradient_penalty", "exact second-order gradient"},
      {"rng", rng_text.str()},
  };
  std::string text;
  for (const auto& [k, v] : meta) text += k + "=" + v + "\n";
  io::put_u32(out, static_cast<std::uint32_t>(text.size()));
  io::put_bytes(out, text);
  io::put_u32(out, crc_of(out));
  return out;
}

void Trainer::save(const std::filesystem::path& path) const { io::write_file_atomic(path, encode_checkpoint()); }

Trainer Trainer::decode_checkpoint(std::string_view bytes) {
  const Parsed p = parse_checkpoint(bytes);
  try {
    TrainOptions o;
    o.model = config_from(p);
    o.weights = {meta_double(p.meta, "alpha"), meta_double(p.meta, "beta"), meta_double(p.meta, "gamma"),
                 meta_double(p.meta, "lambda_gp")};
    o.sparsity = meta_at(p.meta, "sparsity") == "true";
    o.adam = {meta_double(p.meta, "lr"), meta_double(p.meta, "beta1"), meta_double(p.meta, "beta2"),
              meta_double(p.meta, "adam_eps")};
    o.schedule.critic_steps = static_cast<std::uint32_t>(meta_u64(p.meta, "critic_steps"));
    o.schedule.generator_steps = static_cast<std::uint32_t>(meta_u64(p.meta, "generator_steps"));
    o.schedule.batch_size = static_cast<std::uint32_t>(meta_u64(p.meta, "batch_size"));
    o.schedule.iterations = meta_u64(p.meta, "iterations");
    o.schedule.eval_interval = meta_u64(p.meta, "eval_interval");
    o.schedule.seed = meta_u64(p.meta, "seed");

    Trainer t(o);
    fill_params(t.generator_, p.params, "G.");
    fill_params(t.critic_, p.params, "D.");
    fill_moments(t.generator_, t.gen_state_, p.moments, "G.");
    fill_moments(t.critic_, t.critic_state_, p.moments, "D.");
    t.gen_state_.t = meta_u64(p.meta, "generator_t");
    t.critic_state_.t = meta_u64(p.meta, "critic_t");
    t.iteration_ = meta_u64(p.meta, "iteration");
    std::istringstream rng_text(meta_at(p.meta, "rng"));
    rng_text >> t.rng_;
    if (!rng_text) throw CheckpointError(CheckpointErrorKind::kMalformed, "checkpoint: bad generator state");
    return t;
  } catch (const std::logic_error& e) {
    // std::stoull and friends, and config validation.
    throw CheckpointError(CheckpointErrorKind::kMalformed, std::string("checkpoint: ") + e.what());
  }
}

Trainer Trainer::load(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

GeneratorBundle load_generator(const std::filesystem::path& path) {
  Trainer t = Trainer::load(path);
  return {t.options().model, t.generator()};
}

std::map<std::string, std::string> checkpoint_metadata(std::string_view bytes) { return parse_checkpoint(bytes).meta; }

}  // namespace facevox::training
