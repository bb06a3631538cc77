#include <CLI11.hpp>
#include <filesystem>
#include <optional>
#include <ostream>

#include "facevox/cli/commands.hpp"
#include "facevox/io/binary.hpp"

namespace facevox::cli {
namespace fs = std::filesystem;

namespace {

struct SharedFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string preset;
  std::vector<std::string> sets;
  bool force = false;
};

void add_shared(CLI::App* cmd, SharedFlags& f, bool out_required) {
  cmd->add_option("--config", f.config, "Run configuration file (key = value lines)");
  cmd->add_option("--seed", f.seed, "Random seed");
  auto* out = cmd->add_option("--out", f.out, "Output directory");
  if (out_required) out->required();
  cmd->add_option("--preset", f.preset, "Model preset")->check(CLI::IsMember({"paper", "desk"}));
  cmd->add_option("--set", f.sets, "Override a config key, as key=value")
      ->expected(1)
      ->allow_extra_args(false)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  cmd->add_flag("--force", f.force, "Overwrite earlier outputs");
}

RunConfig resolve(const SharedFlags& f, KeyValues extra) {
  KeyValues file;
  if (!f.config.empty()) {
    if (!fs::exists(f.config)) throw ConfigError("no such config file: " + f.config);
    file = parse_config_text(io::read_file(f.config));
  }
  KeyValues overrides;
  if (!f.preset.empty()) overrides.emplace_back("preset", f.preset);
  if (f.seed) overrides.emplace_back("seed", std::to_string(*f.seed));
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  for (auto& kv : extra) overrides.push_back(std::move(kv));
  return resolve_config(file, overrides);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Depth view to voxel grid reconstruction", "facevox"};
  app.require_subcommand(1);

  SharedFlags synth_f, train_f, predict_f, eval_f, ablate_f;
  auto* synth_cmd = app.add_subcommand("synth", "Synthesize depth/grid training pairs");
  add_shared(synth_cmd, synth_f, true);

  std::string train_data, resume;
  bool no_attention = false, no_sparsity = false;
  auto* train_cmd = app.add_subcommand("train", "Train generator and critic on a dataset");
  add_shared(train_cmd, train_f, true);
  train_cmd->add_option("dataset", train_data, "Dataset directory")->required();
  train_cmd->add_option("--resume", resume, "Continue from a checkpoint");
  train_cmd->add_flag("--no-attention", no_attention, "Disable both attention blocks");
  train_cmd->add_flag("--no-sparsity", no_sparsity, "Drop the sparsity term");

  std::string checkpoint, input;
  bool mesh = false;
  auto* predict_cmd = app.add_subcommand("predict", "Predict occupancy grids from depth views");
  add_shared(predict_cmd, predict_f, true);
  predict_cmd->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
  predict_cmd->add_option("input", input, "Depth file, directory of depth files, or dataset")->required();
  predict_cmd->add_flag("--mesh", mesh, "Also export the boundary surface of each grid");

  std::string predictions, eval_data;
  std::optional<double> threshold;
  auto* eval_cmd = app.add_subcommand("eval", "Score predicted grids against a dataset");
  add_shared(eval_cmd, eval_f, false);
  eval_cmd->add_option("predictions", predictions, "Directory of predicted grids")->required();
  eval_cmd->add_option("dataset", eval_data, "Dataset directory or manifest")->required();
  eval_cmd->add_option("--threshold", threshold, "Occupancy threshold");

  std::string ablate_data;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and score all attention/sparsity combinations");
  add_shared(ablate_cmd, ablate_f, true);
  ablate_cmd->add_option("dataset", ablate_data, "Dataset directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  try {
    if (*synth_cmd) {
      const auto c = resolve(synth_f, {});
      synth(c, synth_f.out, synth_f.force);
      out << "wrote " << c.samples << " samples to " << synth_f.out << '\n';
    } else if (*train_cmd) {
      KeyValues extra;
      if (no_attention) extra.emplace_back("attention", "false");
      if (no_sparsity) extra.emplace_back("sparsity", "false");
      const auto c = resolve(train_f, extra);
      TrainRequest req{train_data, train_f.out, std::nullopt, train_f.force};
      if (!resume.empty()) req.resume = resume;
      train(c, req, out);
    } else if (*predict_cmd) {
      const auto c = resolve(predict_f, {});
      const auto code = predict(c, {checkpoint, input, predict_f.out, mesh}, err);
      fs::create_directories(predict_f.out);
      io::write_file_atomic(fs::path(predict_f.out) / kResolvedConfigName, encode_config(c));
      return code;
    } else if (*eval_cmd) {
      KeyValues extra;
      if (threshold) extra.emplace_back("threshold", io::format_double(*threshold));
      const auto c = resolve(eval_f, extra);
      const auto report = evaluate(predictions, eval_data, c.threshold, c.threads);
      const auto text = evaluation::encode_report(report);
      if (eval_f.out.empty()) {
        out << text;
      } else {
        fs::create_directories(eval_f.out);
        io::write_file_atomic(fs::path(eval_f.out) / "report.tsv", text);
        io::write_file_atomic(fs::path(eval_f.out) / kResolvedConfigName, encode_config(c));
        out << text.substr(text.rfind("MEAN"));
      }
    } else if (*ablate_cmd) {
      const auto c = resolve(ablate_f, {});
      out << encode_ablation(ablate(c, ablate_data, ablate_f.out, ablate_f.force, out));
    }
    return kOk;
  } catch (const CommandError& e) {
    err << "facevox: " << e.what() << '\n';
    return e.code();
  } catch (const ConfigError& e) {
    err << "facevox: config: " << e.what() << '\n';
    return kUsage;
  } catch (const training::TrainingAborted& e) {
    err << "facevox: numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const objectives::NonFiniteLoss& e) {
    err << "facevox: numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const training::NonFiniteGradient& e) {
    err << "facevox: numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    err << "facevox: " << e.what() << '\n';
    return kData;
  }
}

}  // namespace facevox::cli
