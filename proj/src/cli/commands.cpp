#include "facevox/cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "facevox/geometry/dataset.hpp"

namespace facevox::cli {
namespace fs = std::filesystem;

namespace {

std::string padded(std::size_t i, int width = 6) {
  std::string s = std::to_string(i);
  return std::string(s.size() < static_cast<std::size_t>(width) ? width - s.size() : 0, '0') + s;
}

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string list_paths(const std::vector<fs::path>& paths) {
  std::string out;
  for (const auto& p : paths) out += "\n  " + p.string();
  return out;
}

void write_text(const fs::path& path, const std::string& text) { io::write_file_atomic(path, text); }

void echo_config(const RunConfig& config, const fs::path& dir) {
  fs::create_directories(dir);
  write_text(dir / kResolvedConfigName, encode_config(config));
}

evaluation::MetricReport score(const model::ModelConfig& model, const model::NetworkParams& params,
                               const std::vector<training::Sample>& samples, double threshold, std::size_t threads) {
  std::vector<double> iou(samples.size()), ce(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    const auto pred = model::generator_forward(model, params, samples[i].depth);
    iou[i] = evaluation::iou(pred, samples[i].truth, threshold);
    ce[i] = evaluation::ce_metric(pred, samples[i].truth);
  });
  evaluation::MetricReport r;
  r.threshold = threshold;
  for (std::size_t i = 0; i < samples.size(); ++i) r.add(padded(i), iou[i], ce[i]);
  return r;
}

// Keeps log lines up to and including `iteration`, for a resumed run.
void truncate_log(const fs::path& path, std::uint64_t iteration) {
  std::string kept;
  if (fs::exists(path)) {
    std::istringstream in(io::read_file(path));
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      if (std::stoull(line.substr(0, line.find('\t'))) > iteration) break;
      kept += line + "\n";
    }
  }
  write_text(path, kept);
}

}  // namespace

std::string Dataset::id(std::size_t i) const { return fs::path(records[i].depth_path).stem().string(); }

void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

Dataset open_dataset(const fs::path& path) {
  Dataset d;
  fs::path manifest = path;
  if (fs::is_directory(path)) {
    d.root = path;
    manifest = path / kManifestName;
  } else {
    d.root = path.parent_path();
  }
  if (!fs::exists(manifest)) throw CommandError(kData, "no manifest at " + manifest.string() + " (dataset absent or incomplete)");
  try {
    d.records = io::read_manifest(manifest);
  } catch (const io::FormatError& e) {
    throw CommandError(kData, manifest.string() + ": " + e.what());
  }
  if (d.records.empty()) throw CommandError(kData, manifest.string() + ": no samples");
  return d;
}

std::vector<training::Sample> load_samples(const Dataset& data, std::size_t view_size, std::size_t threads) {
  std::vector<fs::path> missing;
  for (std::size_t i = 0; i < data.records.size(); ++i)
    for (const auto& p : {data.depth_path(i), data.grid_path(i)})
      if (!fs::exists(p)) missing.push_back(p);
  if (!missing.empty()) throw CommandError(kData, "missing dataset files:" + list_paths(missing));

  std::vector<training::Sample> out(data.records.size());
  parallel_for(out.size(), threads, [&](std::size_t i) {
    out[i].depth = io::read_depth(data.depth_path(i));
    out[i].truth = io::read_grid(data.grid_path(i));
    if (out[i].depth.width != view_size || out[i].depth.height != view_size || out[i].truth.n != view_size)
      throw CommandError(kData, data.depth_path(i).string() + ": sample size does not match view size " +
                                    std::to_string(view_size));
  });
  return out;
}

void synth(const RunConfig& config, const fs::path& out, bool force) {
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!force) throw CommandError(kUsage, out.string() + " is not empty; pass --force to overwrite");
    fs::remove(out / kManifestName);
  }
  fs::create_directories(out / "depth");
  fs::create_directories(out / "grid");

  std::vector<io::ManifestRecord> records(config.samples);
  const std::uint64_t base = config.train.schedule.seed;
  parallel_for(records.size(), config.threads, [&](std::size_t i) {
    const auto s = geometry::synth_sample(base + i, config.synth);
    auto& r = records[i];
    r.depth_path = "depth/" + padded(i) + ".dpth";
    r.grid_path = "grid/" + padded(i) + ".voxg";
    io::write_depth(out / r.depth_path, s.depth);
    io::write_grid(out / r.grid_path, s.grid, io::GridKind::kBinary);
    r.seed = s.seed;
    r.yaw = s.params.pose.yaw;
    r.pitch = s.params.pose.pitch;
    r.roll = s.params.pose.roll;
    r.expression = s.params.expression;
  });
  echo_config(config, out);
  io::write_manifest(out / kManifestName, records);
}

training::Trainer train(const RunConfig& config, const TrainRequest& request, std::ostream& progress) {
  const fs::path log_path = request.out / kTrainLogName;
  if (fs::exists(log_path) && !request.resume && !request.force)
    throw CommandError(kUsage, request.out.string() + " already holds a training run; pass --resume or --force");

  training::Trainer trainer = request.resume ? training::Trainer::load(*request.resume) : training::Trainer(config.train);
  if (request.resume) trainer.set_iterations(config.train.schedule.iterations);
  const auto& options = trainer.options();

  const auto data = open_dataset(request.dataset);
  const auto samples = load_samples(data, options.model.view_size, config.threads);

  RunConfig effective = config;
  effective.train = options;
  echo_config(effective, request.out);
  for (const auto& p : {log_path, request.out / kEvalLogName}) {
    if (request.resume)
      truncate_log(p, trainer.iteration());
    else
      write_text(p, "");
  }
  std::ofstream log(log_path, std::ios::app);
  std::ofstream eval_log(request.out / kEvalLogName, std::ios::app);

  const std::uint64_t total = options.schedule.iterations, interval = options.schedule.eval_interval;
  for (std::uint64_t i = trainer.iteration(); i < total; ++i) {
    const auto& sample = samples[trainer.sample_index(i, samples.size())];
    const auto start = std::chrono::steady_clock::now();
    training::IterationLosses losses;
    try {
      losses = trainer.train_iteration(sample);
    } catch (const training::TrainingAborted& e) {
      trainer.save(request.out / "rollback.agck");
      throw CommandError(kNumerical, "iteration " + std::to_string(i + 1) + ": " + e.what());
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    log << i + 1 << '\t' << io::format_double(losses.critic);
    for (double g : losses.generator) log << '\t' << io::format_double(g);
    log << '\t' << fixed3(ms) << '\n' << std::flush;

    if ((i + 1) % interval != 0) continue;
    trainer.save(request.out / ("checkpoint_" + padded(i + 1) + ".agck"));
    if (i + 1 < total) {
      const auto r = score(options.model, trainer.generator(), samples, config.threshold, config.threads);
      eval_log << i + 1 << '\t' << io::format_double(r.mean_iou()) << '\t' << io::format_double(r.mean_ce()) << '\n'
               << std::flush;
      progress << "iteration " << i + 1 << ": mean IoU " << r.mean_iou() << ", mean CE " << r.mean_ce() << '\n';
    }
  }
  trainer.save(request.out / kFinalCheckpointName);
  const auto r = score(options.model, trainer.generator(), samples, config.threshold, config.threads);
  eval_log << trainer.iteration() << '\t' << io::format_double(r.mean_iou()) << '\t' << io::format_double(r.mean_ce())
           << '\n';
  progress << "finished " << trainer.iteration() << " iterations: mean IoU " << r.mean_iou() << ", mean CE "
           << r.mean_ce() << '\n';
  return trainer;
}

ExitCode predict(const RunConfig& config, const PredictRequest& request, std::ostream& errors) {
  training::GeneratorBundle bundle;
  try {
    bundle = training::load_generator(request.checkpoint);
  } catch (const training::CheckpointError& e) {
    throw CommandError(kData, request.checkpoint.string() + ": " + e.what());
  }

  struct Input {
    std::string id;
    fs::path depth;
    std::optional<fs::path> truth;
  };
  std::vector<Input> inputs;
  if (fs::is_directory(request.input) && fs::exists(request.input / kManifestName)) {
    const auto data = open_dataset(request.input);
    for (std::size_t i = 0; i < data.records.size(); ++i) inputs.push_back({data.id(i), data.depth_path(i), data.grid_path(i)});
  } else if (fs::is_directory(request.input)) {
    for (const auto& e : fs::directory_iterator(request.input))
      if (e.is_regular_file() && e.path().extension() == ".dpth") inputs.push_back({e.path().stem().string(), e.path(), {}});
    std::sort(inputs.begin(), inputs.end(), [](const Input& a, const Input& b) { return a.id < b.id; });
  } else if (fs::exists(request.input)) {
    inputs.push_back({request.input.stem().string(), request.input, {}});
  } else {
    throw CommandError(kData, "no such input: " + request.input.string());
  }
  if (inputs.empty()) throw CommandError(kData, "no depth files in " + request.input.string());

  fs::create_directories(request.out);
  std::vector<std::string> failures(inputs.size());
  parallel_for(inputs.size(), config.threads, [&](std::size_t i) {
    const auto& in = inputs[i];
    try {
      const auto depth = io::read_depth(in.depth);
      const std::size_t v = bundle.config.view_size;
      if (depth.width != v || depth.height != v)
        throw std::invalid_argument("depth view is " + std::to_string(depth.width) + "x" + std::to_string(depth.height) +
                                    ", checkpoint expects " + std::to_string(v) + "x" + std::to_string(v));
      const auto grid = model::generator_forward(bundle.config, bundle.params, depth);
      io::write_grid(request.out / (in.id + ".voxg"), grid, io::GridKind::kFloat);
      if (request.mesh) {
        const auto mesh_path = request.out / (in.id + ".obj");
        const auto truth = in.truth ? io::read_grid(*in.truth) : geometry::VoxelGrid();
        const bool with_field = in.truth && std::any_of(truth.values.begin(), truth.values.end(),
                                                         [&](double t) { return t > config.threshold; });
        if (with_field) {
          const auto s = evaluation::extract_surface_with_distance(grid, truth, config.threshold);
          io::write_mesh(mesh_path, s.mesh, &s.vertex_distance);
        } else {
          io::write_mesh(mesh_path, evaluation::extract_surface(grid, config.threshold));
        }
      }
    } catch (const std::exception& e) {
      failures[i] = in.depth.string() + ": " + e.what();
    }
  });
  ExitCode code = kOk;
  for (const auto& f : failures)
    if (!f.empty()) {
      errors << "facevox: " << f << '\n';
      code = kData;
    }
  return code;
}

evaluation::MetricReport evaluate(const fs::path& predictions, const fs::path& dataset, double threshold,
                                  std::size_t threads) {
  const auto data = open_dataset(dataset);
  std::vector<fs::path> missing;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto p = predictions / (data.id(i) + ".voxg");
    if (!fs::exists(p)) missing.push_back(p);
  }
  if (!missing.empty()) throw CommandError(kData, "missing predictions:" + list_paths(missing));

  std::vector<double> iou(data.records.size()), ce(data.records.size());
  parallel_for(data.records.size(), threads, [&](std::size_t i) {
    const auto pred = io::read_grid(predictions / (data.id(i) + ".voxg"));
    const auto truth = io::read_grid(data.grid_path(i));
    if (pred.n != truth.n)
      throw CommandError(kData, data.id(i) + ": prediction extent " + std::to_string(pred.n) + " differs from truth " +
                                    std::to_string(truth.n));
    iou[i] = evaluation::iou(pred, truth, threshold);
    ce[i] = evaluation::ce_metric(pred, truth);
  });
  evaluation::MetricReport report;
  report.threshold = threshold;
  for (std::size_t i = 0; i < data.records.size(); ++i) report.add(data.id(i), iou[i], ce[i]);
  return report;
}

std::vector<AblationRow> ablate(const RunConfig& config, const fs::path& dataset, const fs::path& out, bool force,
                                std::ostream& progress) {
  const auto eval_data = open_dataset(config.eval_dataset.empty() ? dataset : fs::path(config.eval_dataset));
  const auto eval_samples = load_samples(eval_data, config.train.model.view_size, config.threads);

  std::vector<AblationRow> rows;
  for (const auto& [attention, sparsity] : {std::pair{false, false}, {true, false}, {false, true}, {true, true}}) {
    RunConfig c = config;
    c.train.model.attention = attention;
    c.train.sparsity = sparsity;
    const std::string name =
        std::string("attention-") + (attention ? "on" : "off") + "_sparsity-" + (sparsity ? "on" : "off");
    progress << "training " << name << '\n';
    const auto trainer = train(c, {dataset, out / name, std::nullopt, force}, progress);
    const auto r = score(c.train.model, trainer.generator(), eval_samples, config.threshold, config.threads);
    rows.push_back({attention, sparsity, r.mean_iou(), r.mean_ce()});
  }
  echo_config(config, out);
  write_text(out / "ablation.tsv", encode_ablation(rows));
  return rows;
}

std::string encode_ablation(const std::vector<AblationRow>& rows) {
  std::string out = "attention\tsparsity\tiou\tce\n";
  for (const auto& r : rows)
    out += std::string(r.attention ? "yes" : "no") + '\t' + (r.sparsity ? "yes" : "no") + '\t' +
           io::format_double(r.iou) + '\t' + io::format_double(r.ce) + '\n';
  return out;
}

}  // namespace facevox::cli
