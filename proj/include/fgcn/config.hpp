#pragma once

// Run configuration: model, training and data settings read from a
// `key = value` file, then overridden by `key=value` strings. Every key is
// checked against the schema below.

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fgcn/model.hpp"
#include "fgcn/training.hpp"

namespace fgcn {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  StreamSelection streams = StreamSelection::two;
  PreprocessOptions preprocess;
  bool center_joint_set = false;
  std::string train_manifest;
  std::string test_manifest;
  std::string output_dir = "run";
  std::string precision = "double";
  std::string source = "<defaults>";
  std::size_t requested_m = 0;  // `m` key; 0 when unset

  ParseOptions parse_options() const { return ParseOptions{model.bodies}; }

  void validate() const {
    model.validate();
    train.validate();
    if (requested_m && requested_m != model.m())
      throw ConfigError("m = " + std::to_string(requested_m) + " disagrees with the last channel width " +
                        std::to_string(model.m()));
    if (precision != "double" && precision != "float")
      throw ConfigError("precision must be 'double' or 'float', got '" + precision + "'");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : v) {
    if (ch == ',' || ch == ' ' || ch == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

template <typename N>
N parse_number(const std::string& key, const std::string& v) {
  N out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("invalid value '" + v + "' for key '" + key + "'");
  return out;
}

inline std::size_t parse_count(const std::string& key, const std::string& v) {
  return parse_number<std::size_t>(key, v);
}

inline double parse_real(const std::string& key, const std::string& v) {
  const double d = parse_number<double>(key, v);
  if (!std::isfinite(d)) throw ConfigError("value for '" + key + "' must be finite");
  return d;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("invalid boolean '" + v + "' for key '" + key + "'");
}

template <typename N>
std::vector<N> parse_list(const std::string& key, const std::string& v) {
  std::vector<N> out;
  for (const auto& tok : split_list(v)) out.push_back(parse_number<N>(key, tok));
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

inline const std::map<std::string, Setter>& config_schema() {
  static const std::map<std::string, Setter> schema = {
      // model
      {"topology", [](RunConfig& c, const std::string&, const std::string& v) { c.model.topology = v; }},
      {"streams", [](RunConfig& c, const std::string&, const std::string& v) { c.streams = parse_streams(v); }},
      {"features", [](RunConfig& c, const std::string&, const std::string& v) { c.model.features = parse_features(v); }},
      {"stages", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.stages = parse_count(k, v); }},
      {"clip_len", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.clip_len = parse_count(k, v); }},
      {"fgcb_layers", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.fgcb_layers = parse_count(k, v); }},
      {"L", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.fgcb_layers = parse_count(k, v); }},
      {"m", [](RunConfig& c, const std::string& k, const std::string& v) { c.requested_m = parse_count(k, v); }},
      {"k_t", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.k_t = parse_count(k, v); }},
      {"gconvs_k_t", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.gconvs_k_t = parse_count(k, v); }},
      {"channels", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.channels = parse_list<std::size_t>(k, v); }},
      {"strides", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.strides = parse_list<std::size_t>(k, v); }},
      {"residual", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.residual = parse_bool(k, v); }},
      {"norm", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.norm = parse_bool(k, v); }},
      {"norm_eps", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.norm_eps = parse_real(k, v); }},
      {"degree_eps", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.degree_eps = parse_real(k, v); }},
      {"fusion", [](RunConfig& c, const std::string&, const std::string& v) { c.model.fusion = v; }},
      {"fusion_weights", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.fusion_weights = parse_list<double>(k, v); }},
      {"alpha", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.alpha = parse_real(k, v); }},
      {"bodies", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.bodies = parse_count(k, v); }},
      {"init_seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.init_seed = parse_number<std::uint64_t>(k, v); }},
      // preprocessing
      {"center", [](RunConfig& c, const std::string& k, const std::string& v) { c.preprocess.center = parse_bool(k, v); }},
      {"scale", [](RunConfig& c, const std::string& k, const std::string& v) { c.preprocess.scale = parse_bool(k, v); }},
      {"center_joint", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.preprocess.center_joint = parse_count(k, v);
         c.center_joint_set = true;
       }},
      // training
      {"sampling_mode", [](RunConfig& c, const std::string&, const std::string& v) { c.train.sampling = parse_sampling_mode(v); }},
      {"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.seed = parse_number<std::uint64_t>(k, v); }},
      {"batch_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.batch_size = parse_count(k, v); }},
      {"lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.lr = parse_real(k, v); }},
      {"momentum", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.momentum = parse_real(k, v); }},
      {"lr_drops", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.lr_drops = parse_list<int>(k, v); }},
      {"lr_factor", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.lr_factor = parse_real(k, v); }},
      {"epochs", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.epochs = parse_number<int>(k, v); }},
      {"weight_decay", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.weight_decay = parse_real(k, v); }},
      {"grad_clip", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.grad_clip = parse_real(k, v); }},
      {"checkpoint_every", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.checkpoint_every = parse_number<int>(k, v); }},
      {"eval_every", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.eval_every = parse_number<int>(k, v); }},
      // data and output
      {"train_manifest", [](RunConfig& c, const std::string&, const std::string& v) { c.train_manifest = v; }},
      {"test_manifest", [](RunConfig& c, const std::string&, const std::string& v) { c.test_manifest = v; }},
      {"output_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; }},
      {"precision", [](RunConfig& c, const std::string&, const std::string& v) { c.precision = v; }},
  };
  return schema;
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : detail::config_schema()) keys.push_back(k);
  return keys;
}

inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  const auto& schema = detail::config_schema();
  const auto it = schema.find(key);
  if (it == schema.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(c, key, value);
}

// Applies one `key=value` override.
inline void apply_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set_config_value(c, detail::trim(std::string_view(assignment).substr(0, eq)),
                   detail::trim(std::string_view(assignment).substr(eq + 1)));
}

// Resolves a relative data path against the config file's directory.
inline std::string resolve_relative(const std::string& path, const std::filesystem::path& base) {
  if (path.empty()) return path;
  std::filesystem::path p(path);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal().string();
}

inline RunConfig parse_config(std::istream& in, const std::string& source = "<config>",
                              const std::filesystem::path& base = {}) {
  RunConfig c;
  c.source = source;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string body = detail::trim(detail::strip_comment(line));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(std::string_view(body).substr(0, eq));
    const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
    try {
      set_config_value(c, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  c.train_manifest = resolve_relative(c.train_manifest, base);
  c.test_manifest = resolve_relative(c.test_manifest, base);
  return c;
}

// Looks the file up as given, then under $FGCN_CONFIG_DIR.
inline std::string find_config(const std::string& path) {
  namespace fs = std::filesystem;
  if (fs::exists(path)) return path;
  if (const char* dir = std::getenv("FGCN_CONFIG_DIR"); dir && fs::path(path).is_relative()) {
    const auto p = fs::path(dir) / path;
    if (fs::exists(p)) return p.string();
  }
  throw ConfigError("config file not found: " + path);
}

inline RunConfig load_config(const std::string& path) {
  const std::string resolved = find_config(path);
  std::ifstream in(resolved);
  if (!in) throw ConfigError("cannot read config file: " + resolved);
  return parse_config(in, resolved, std::filesystem::path(resolved).parent_path());
}

// Centers on the topology's center joint unless a joint was given.
inline PreprocessOptions effective_preprocess(const RunConfig& c, const GraphTopology& g) {
  PreprocessOptions p = c.preprocess;
  if (!c.center_joint_set) p.center_joint = g.center;
  return p;
}

inline std::string format_config(const RunConfig& c) {
  auto join = [](const auto& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
  };
  std::ostringstream os;
  const char* streams[] = {"spatial", "motion", "two"};
  const char* feats[] = {"joint", "bone", "both"};
  os << "topology=" << c.model.topology << '\n'
     << "streams=" << streams[static_cast<int>(c.streams)] << '\n'
     << "features=" << feats[static_cast<int>(c.model.features)] << '\n'
     << "stages=" << c.model.stages << '\n'
     << "clip_len=" << c.model.clip_len << '\n'
     << "fgcb_layers=" << c.model.fgcb_layers << '\n'
     << "k_t=" << c.model.k_t << '\n'
     << "gconvs_k_t=" << c.model.gconvs_k_t << '\n'
     << "channels=" << join(c.model.channels) << '\n'
     << "strides=" << join(c.model.resolved_strides()) << '\n'
     << "fusion=" << c.model.fusion << '\n'
     << "alpha=" << c.model.alpha << '\n'
     << "bodies=" << c.model.bodies << '\n'
     << "seed=" << c.train.seed << '\n'
     << "batch_size=" << c.train.batch_size << '\n'
     << "lr=" << c.train.lr << '\n'
     << "momentum=" << c.train.momentum << '\n'
     << "lr_drops=" << join(c.train.lr_drops) << '\n'
     << "epochs=" << c.train.epochs << '\n';
  return os.str();
}

}  // namespace fgcn
