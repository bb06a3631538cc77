#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "facevox/cli/config.hpp"
#include "facevox/evaluation/evaluation.hpp"
#include "facevox/io/formats.hpp"
#include "facevox/training/training.hpp"

namespace facevox::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

/// Failure carrying the process exit code it maps to.
class CommandError : public std::runtime_error {
 public:
  CommandError(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const { return code_; }

 private:
  ExitCode code_;
};

inline constexpr const char* kManifestName = "manifest.tsv";
inline constexpr const char* kResolvedConfigName = "resolved.cfg";
inline constexpr const char* kTrainLogName = "train.log";
inline constexpr const char* kEvalLogName = "eval.log";
inline constexpr const char* kFinalCheckpointName = "final.agck";

struct Dataset {
  std::filesystem::path root;
  std::vector<io::ManifestRecord> records;

  /// Sample id of record `i`: the stem of its depth file.
  std::string id(std::size_t i) const;
  std::filesystem::path depth_path(std::size_t i) const { return root / records[i].depth_path; }
  std::filesystem::path grid_path(std::size_t i) const { return root / records[i].grid_path; }
};

/// Accepts a dataset directory or its manifest file.
Dataset open_dataset(const std::filesystem::path& path);

/// Reads every pair; missing files are all listed in the error.
std::vector<training::Sample> load_samples(const Dataset& data, std::size_t view_size, std::size_t threads);

/// Runs fn(i) for i in [0, count) on up to `threads` workers (0: hardware).
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// Writes `samples` pairs with seeds seed + index and the manifest last.
void synth(const RunConfig& config, const std::filesystem::path& out, bool force);

struct TrainRequest {
  std::filesystem::path dataset;
  std::filesystem::path out;
  std::optional<std::filesystem::path> resume;
  bool force = false;
};

/// Checkpoints every eval interval and at the end, one log line per
/// iteration. Returns the final trainer.
training::Trainer train(const RunConfig& config, const TrainRequest& request, std::ostream& progress);

struct PredictRequest {
  std::filesystem::path checkpoint;
  std::filesystem::path input;  // depth file, directory of depth files, or dataset
  std::filesystem::path out;
  bool mesh = false;
};

/// One float grid per input. Per-file failures are reported to `errors`
/// and turn the result into kData; the other inputs are still processed.
ExitCode predict(const RunConfig& config, const PredictRequest& request, std::ostream& errors);

/// Scores `predictions/<id>.voxg` against every sample of the dataset.
evaluation::MetricReport evaluate(const std::filesystem::path& predictions, const std::filesystem::path& dataset,
                                  double threshold, std::size_t threads);

struct AblationRow {
  bool attention = false;
  bool sparsity = false;
  double iou = 0.0;
  double ce = 0.0;
};

/// Trains the four attention/sparsity combinations with a shared seed,
/// data and budget, then scores each on the evaluation dataset.
std::vector<AblationRow> ablate(const RunConfig& config, const std::filesystem::path& dataset,
                                const std::filesystem::path& out, bool force, std::ostream& progress);

/// `attention<TAB>sparsity<TAB>iou<TAB>ce` header and one row per model.
std::string encode_ablation(const std::vector<AblationRow>& rows);

/// Command-line entry point; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace facevox::cli
