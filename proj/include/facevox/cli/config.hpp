#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "facevox/geometry/dataset.hpp"
#include "facevox/training/training.hpp"

namespace facevox::cli {

/// Bad key, value or combination in a run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every tunable of a run. Paths left empty are supplied on the command line.
struct RunConfig {
  training::TrainOptions train;
  geometry::SynthSettings synth;
  std::size_t samples = 200;
  double threshold = 0.5;
  std::size_t threads = 0;  // 0: one per hardware thread
  std::string eval_dataset;

  /// Defaults of a preset ("desk" or "paper").
  static RunConfig for_preset(const std::string& preset);

  const std::string& preset() const { return train.model.preset; }
  void validate() const;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
/// Unknown or repeated keys and lines without `=` are rejected.
KeyValues parse_config_text(const std::string& text);

/// Builds a configuration from the preset named by `overrides`, else by the
/// file, else "desk", then applies file values and finally `overrides`.
RunConfig resolve_config(const KeyValues& file, const KeyValues& overrides);

/// Every effective value as config text; parsing it back reproduces `config`.
std::string encode_config(const RunConfig& config);

/// Keys in echo order.
std::vector<std::string> config_keys();

}  // namespace facevox::cli
