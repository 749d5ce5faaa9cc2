#pragma once

// Flat key = value run configuration: built-in defaults, then a config file,
// then command-line overrides.

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "foveal/glimpse.hpp"

namespace foveal {

enum class KeyKind { text, path, integer, real, boolean, resolutions, choice };

struct KeySpec {
  const char* name;
  const char* fallback;  // default value
  KeyKind kind;
  const char* help;
  const char* choices = "";  // '|'-separated, for KeyKind::choice
  // Keys that shape results; recorded inside checkpoints. Paths and run
  // control are left out so relocating a run does not change its bytes.
  bool recorded = true;
};

inline const std::vector<KeySpec>& config_keys() {
  static const std::vector<KeySpec> k = {
      // locations
      {"out", "", KeyKind::path, "output directory (default: $FOVEAL_OUT, else ./foveal_out)", "", false},
      {"data", "", KeyKind::path, "corpus root holding train/ and test/ class directories (default: <out>/data)", "", false},
      {"pretrain_data", "", KeyKind::path, "pretraining corpus directory (default: <data>/pretrain)", "", false},
      {"core_checkpoint", "", KeyKind::path, "pretrained visual core (default: <out>/core.ckpt)", "", false},
      {"checkpoint", "", KeyKind::path, "attention model checkpoint (default: <out>/model.ckpt)", "", false},
      {"idx_images", "", KeyKind::path, "optional IDX image file used as synth base digits", "", false},
      {"idx_labels", "", KeyKind::path, "optional IDX label file paired with idx_images", "", false},
      {"resume", "false", KeyKind::boolean, "train: continue from <checkpoint> if it exists", "", false},
      {"seed", "1", KeyKind::integer, "master seed for every random stream"},
      // synthetic corpus
      {"classes", "10", KeyKind::integer, "synth: number of digit classes (2-10)"},
      {"train_per_class", "500", KeyKind::integer, "synth: training canvases per class"},
      {"test_per_class", "100", KeyKind::integer, "synth: test canvases per class"},
      {"pretrain_per_class", "200", KeyKind::integer, "synth: centred pretraining canvases per class"},
      {"canvas", "100", KeyKind::integer, "synth: canvas side in pixels"},
      {"clutter_count", "4", KeyKind::integer, "synth: clutter fragments per canvas"},
      {"clutter_size", "8", KeyKind::integer, "synth: clutter fragment side in pixels"},
      {"digit_size", "28", KeyKind::integer, "synth: drawn digit side in pixels"},
      // glimpses
      {"glimpses", "3", KeyKind::integer, "glimpses per episode (N)"},
      {"resolutions", "high,medium,low", KeyKind::resolutions, "comma list drawn from high, medium, low"},
      {"base_fraction", "0.25", KeyKind::real, "high-resolution box side as a fraction of the short image side"},
      {"scale_factor", "2", KeyKind::real, "side ratio between consecutive resolutions"},
      {"patch_size", "96", KeyKind::integer, "glimpse and context patch side in pixels"},
      // visual core
      {"core_channels", "16,32", KeyKind::text, "channels of each core convolution"},
      {"core_kernels", "7,3", KeyKind::text, "kernel side of each core convolution (padding keeps size)"},
      {"first_conv_stride", "1", KeyKind::integer, "stride of the first core convolution (1 or 2)"},
      {"feature_dim", "128", KeyKind::integer, "core output width per tower"},
      // attention network
      {"deck1", "256", KeyKind::integer, "classification deck width"},
      {"deck2", "256", KeyKind::integer, "location deck width"},
      {"fusion_width", "256", KeyKind::integer, "width of the glimpse/location fusion layer"},
      {"location_embed", "128", KeyKind::integer, "location embedding width"},
      {"context_hidden", "128", KeyKind::integer, "hidden width of the context network"},
      {"location_mode", "learned", KeyKind::choice, "learned | fixed_center (ablation: every glimpse at the centre)",
       "learned|fixed_center"},
      // pretraining
      {"pretrain_lr", "0.01", KeyKind::real, "pretraining learning rate"},
      {"pretrain_momentum", "0.9", KeyKind::real, "pretraining momentum"},
      {"pretrain_epochs", "3", KeyKind::integer, "pretraining epochs"},
      {"pretrain_batch", "16", KeyKind::integer, "pretraining batch size"},
      {"pretrain_jitter", "0.1", KeyKind::real, "pretraining crop centre jitter in location units"},
      // attention training
      {"lr", "0.01", KeyKind::real, "learning rate"},
      {"momentum", "0.9", KeyKind::real, "momentum in [0,1)"},
      {"sigma", "0.1", KeyKind::real, "location sample standard deviation"},
      {"baseline_decay", "0.9", KeyKind::real, "reward baseline moving-average decay"},
      {"epochs", "10", KeyKind::integer, "training epochs"},
      {"batch", "16", KeyKind::integer, "episodes per optimizer step"},
      {"mirror", "true", KeyKind::boolean, "random left-right reflection during training"},
      {"val_fraction", "0", KeyKind::real, "hold out this stratified fraction of train for validation (0 = off)"},
      // evaluation
      {"eval_seed", "0", KeyKind::integer, "seed of the glimpse noise during evaluation"},
      {"viz_count", "8", KeyKind::integer, "viz: number of test images to render"},
  };
  return k;
}

inline const KeySpec* find_key(const std::string& name) {
  for (const auto& k : config_keys())
    if (name == k.name) return &k;
  return nullptr;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

inline std::vector<Resolution> parse_resolutions(const std::string& s) {
  std::vector<Resolution> out;
  for (const auto& item : split_list(s)) out.push_back(parse_resolution(item));
  if (out.empty()) throw Error("empty resolution list");
  return out;
}

inline std::string resolutions_str(const std::vector<Resolution>& r) {
  std::string s;
  for (std::size_t i = 0; i < r.size(); ++i) s += std::string(i ? "," : "") + to_string(r[i]);
  return s;
}

class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : config_keys()) values_[k.name] = k.fallback;
  }

  // Validates and stores one value. `where` prefixes error messages.
  void set(const std::string& key, const std::string& raw, const std::string& where = "") {
    const KeySpec* spec = find_key(key);
    const std::string at = where.empty() ? "" : where + ": ";
    if (!spec) throw Error(at + "unknown key '" + key + "'");
    const std::string value = trim(raw);
    auto bad = [&](const std::string& what) {
      return Error(at + "cannot parse '" + value + "' for key '" + key + "' (" + what + ")");
    };
    switch (spec->kind) {
      case KeyKind::integer: {
        long long v = 0;
        const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
        if (ec != std::errc() || p != value.data() + value.size() || v < 0) throw bad("expected a non-negative integer");
        break;
      }
      case KeyKind::real: {
        double v = 0;
        const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
        if (ec != std::errc() || p != value.data() + value.size() || !std::isfinite(v)) throw bad("expected a number");
        break;
      }
      case KeyKind::boolean:
        if (value != "true" && value != "false") throw bad("expected true or false");
        break;
      case KeyKind::resolutions:
        try {
          (void)parse_resolutions(value);
        } catch (const Error& e) {
          throw bad(e.what());
        }
        break;
      case KeyKind::choice: {
        bool ok = false;
        for (const auto& c : split_list(spec->choices, '|')) ok = ok || c == value;
        if (!ok) throw bad(std::string("expected one of ") + spec->choices);
        break;
      }
      case KeyKind::text:
      case KeyKind::path:
        break;
    }
    values_[key] = value;
  }

  // `key = value` lines; '#' starts a comment.
  void merge_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read config file " + path.string());
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      if (trim(line).empty()) continue;
      const auto eq = line.find('=');
      const std::string where = path.string() + ":" + std::to_string(n);
      if (eq == std::string::npos) throw Error(where + ": expected 'key = value', got '" + trim(line) + "'");
      set(trim(line.substr(0, eq)), line.substr(eq + 1), where);
    }
  }

  void merge_override(const std::string& arg) {
    const auto eq = arg.find('=');
    if (eq == std::string::npos) throw Error("override '" + arg + "' is not key=value");
    set(trim(arg.substr(0, eq)), arg.substr(eq + 1), "override");
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw Error("unknown key '" + key + "'");
    return it->second;
  }
  std::size_t integer(const std::string& key) const { return static_cast<std::size_t>(std::stoull(str(key))); }
  double real(const std::string& key) const { return std::stod(str(key)); }
  bool boolean(const std::string& key) const { return str(key) == "true"; }
  std::vector<Resolution> resolutions(const std::string& key) const { return parse_resolutions(str(key)); }
  std::vector<std::size_t> integer_list(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(str(key))) {
      std::size_t v = 0;
      const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec != std::errc() || p != item.data() + item.size() || v == 0)
        throw Error("key '" + key + "' needs a comma list of positive integers, got '" + str(key) + "'");
      out.push_back(v);
    }
    if (out.empty()) throw Error("key '" + key + "' is empty");
    return out;
  }

  std::filesystem::path out_dir() const {
    if (!str("out").empty()) return str("out");
    if (const char* env = std::getenv("FOVEAL_OUT"); env && *env) return env;
    return "foveal_out";
  }
  // A path key, or `fallback` when unset.
  std::filesystem::path path_or(const std::string& key, const std::filesystem::path& fallback) const {
    return str(key).empty() ? fallback : std::filesystem::path(str(key));
  }

  // Every key in declaration order; parsing this text reproduces the config.
  std::string resolved(bool recorded_only = false) const {
    std::string s;
    for (const auto& k : config_keys())
      if (!recorded_only || k.recorded) s += std::string(k.name) + " = " + values_.at(k.name) + "\n";
    return s;
  }

  const std::map<std::string, std::string>& values() const { return values_; }
  friend bool operator==(const RunConfig& a, const RunConfig& b) { return a.values_ == b.values_; }

 private:
  std::map<std::string, std::string> values_;
};

inline RunConfig parse_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  RunConfig c;
  if (!file.empty()) c.merge_file(file);
  for (const auto& o : overrides) c.merge_override(o);
  return c;
}

// Parses recorded `key = value` text, e.g. a checkpoint's snapshot.
inline std::map<std::string, std::string> parse_snapshot(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

// One line per key for --help.
inline std::string config_help() {
  std::string s = "Configuration keys (set in --config FILE as 'key = value', or as key=value arguments):\n";
  for (const auto& k : config_keys()) {
    std::string left = std::string("  ") + k.name + " [" + (*k.fallback ? k.fallback : "unset") + "]";
    if (left.size() < 34) left.resize(34, ' ');
    s += left + " " + k.help + "\n";
  }
  s += "Environment: FOVEAL_OUT sets the default output directory.\n";
  return s;
}

}  // namespace foveal
