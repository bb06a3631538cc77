#include "facevox/cli/config.hpp"

#include <charconv>
#include <functional>
#include <set>

#include "facevox/io/formats.hpp"

namespace facevox::cli {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const auto item = trim(std::string_view(v).substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    out.push_back(to_u64(key, item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string from_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

struct Key {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define FACEVOX_U64(NAME, FIELD)                                                   \
  Key {                                                                             \
    NAME, [](const RunConfig& c) { return std::to_string(c.FIELD); },              \
        [](RunConfig& c, const std::string& v) { c.FIELD = static_cast<decltype(c.FIELD)>(to_u64(NAME, v)); } \
  }
#define FACEVOX_DOUBLE(NAME, FIELD)                                                \
  Key {                                                                             \
    NAME, [](const RunConfig& c) { return io::format_double(c.FIELD); },           \
        [](RunConfig& c, const std::string& v) { c.FIELD = to_double(NAME, v); }   \
  }
#define FACEVOX_BOOL(NAME, FIELD)                                                  \
  Key {                                                                             \
    NAME, [](const RunConfig& c) { return from_bool(c.FIELD); },                   \
        [](RunConfig& c, const std::string& v) { c.FIELD = to_bool(NAME, v); }     \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table{
      {"preset", [](const RunConfig& c) { return c.preset(); },
       [](RunConfig&, const std::string&) {}},  // consumed before the table is applied
      {"view_size", [](const RunConfig& c) { return std::to_string(c.train.model.view_size); },
       [](RunConfig& c, const std::string& v) {
         c.train.model.view_size = c.train.model.grid_size = c.synth.view_size = to_u64("view_size", v);
       }},
      {"encoder_channels", [](const RunConfig& c) { return from_list(c.train.model.encoder_channels); },
       [](RunConfig& c, const std::string& v) { c.train.model.encoder_channels = to_list("encoder_channels", v); }},
      {"decoder_channels", [](const RunConfig& c) { return from_list(c.train.model.decoder_channels); },
       [](RunConfig& c, const std::string& v) { c.train.model.decoder_channels = to_list("decoder_channels", v); }},
      FACEVOX_DOUBLE("leaky_slope", train.model.leaky_slope),
      FACEVOX_BOOL("attention", train.model.attention),
      FACEVOX_BOOL("sparsity", train.sparsity),
      FACEVOX_DOUBLE("alpha", train.weights.alpha),
      FACEVOX_DOUBLE("beta", train.weights.beta),
      FACEVOX_DOUBLE("gamma", train.weights.gamma),
      FACEVOX_DOUBLE("lambda", train.weights.lambda_gp),
      FACEVOX_DOUBLE("lr", train.adam.lr),
      FACEVOX_DOUBLE("beta1", train.adam.beta1),
      FACEVOX_DOUBLE("beta2", train.adam.beta2),
      FACEVOX_DOUBLE("adam_eps", train.adam.eps),
      FACEVOX_U64("seed", train.schedule.seed),
      FACEVOX_U64("iterations", train.schedule.iterations),
      FACEVOX_U64("eval_interval", train.schedule.eval_interval),
      FACEVOX_U64("critic_steps", train.schedule.critic_steps),
      FACEVOX_U64("generator_steps", train.schedule.generator_steps),
      FACEVOX_U64("batch_size", train.schedule.batch_size),
      FACEVOX_U64("samples", samples),
      FACEVOX_U64("identity_count", synth.identity_count),
      FACEVOX_U64("mesh_resolution", synth.mesh_resolution),
      FACEVOX_DOUBLE("max_yaw", synth.max_yaw),
      FACEVOX_DOUBLE("max_pitch", synth.max_pitch),
      FACEVOX_DOUBLE("max_roll", synth.max_roll),
      FACEVOX_DOUBLE("noise_sigma", synth.noise_sigma),
      FACEVOX_U64("holes", synth.holes),
      FACEVOX_DOUBLE("hole_radius", synth.hole_radius),
      FACEVOX_DOUBLE("threshold", threshold),
      FACEVOX_U64("threads", threads),
      {"eval_dataset", [](const RunConfig& c) { return c.eval_dataset; },
       [](RunConfig& c, const std::string& v) { c.eval_dataset = v; }},
  };
  return table;
}

#undef FACEVOX_U64
#undef FACEVOX_DOUBLE
#undef FACEVOX_BOOL

const Key& find_key(const std::string& name) {
  for (const auto& k : keys())
    if (k.name == name) return k;
  throw ConfigError("unknown config key '" + name + "'");
}

const std::string* lookup(const KeyValues& kv, const std::string& name) {
  const std::string* out = nullptr;
  for (const auto& [k, v] : kv)
    if (k == name) out = &v;
  return out;
}

}  // namespace

RunConfig RunConfig::for_preset(const std::string& preset) {
  RunConfig c;
  try {
    c.train.model = model::ModelConfig::from_preset(preset);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.synth.view_size = c.train.model.view_size;
  return c;
}

void RunConfig::validate() const {
  try {
    train.model.validate();
    train.weights.validate();
    train.adam.validate();
    train.schedule.validate();
    synth.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (synth.view_size != train.model.view_size) throw ConfigError("synthesis and model view sizes differ");
  if (samples == 0) throw ConfigError("samples must be positive");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  if (train.schedule.eval_interval == 0) throw ConfigError("eval_interval must be positive");
}

KeyValues parse_config_text(const std::string& text) {
  KeyValues out;
  std::set<std::string> seen;
  std::size_t line_no = 0, start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    std::string_view line(text.data() + start, end - start);
    start = end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key != "preset") find_key(key);
    if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(line_no) + ": repeated key '" + key + "'");
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

RunConfig resolve_config(const KeyValues& file, const KeyValues& overrides) {
  std::string preset = "desk";
  if (const auto* p = lookup(file, "preset")) preset = *p;
  if (const auto* p = lookup(overrides, "preset")) preset = *p;
  RunConfig c = RunConfig::for_preset(preset);
  for (const auto* layer : {&file, &overrides})
    for (const auto& [k, v] : *layer) find_key(k).set(c, v);
  c.validate();
  return c;
}

std::string encode_config(const RunConfig& config) {
  std::string out;
  for (const auto& k : keys()) out += k.name + " = " + k.get(config) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.push_back(k.name);
  return out;
}

}  // namespace facevox::cli
