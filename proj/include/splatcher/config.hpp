#pragma once

// Frame parameters, `key=value` parameter files and keyframed scene files.
//
// Precedence, highest first: command line, scene, parameter file,
// SPLATCHER_WORKERS, built-in defaults.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "splatcher/error.hpp"
#include "splatcher/ingest.hpp"
#include "splatcher/model.hpp"

namespace splatcher {

/// Every parameter of one rendered frame.
struct FrameConfig {
  std::string input;
  std::string output = "frame.ppm";
  std::string timing;  // CSV timing report path; empty disables it

  int width = 1024;
  int height = 1024;
  int tile_size = 40;
  int workers = 1;
  int chunk_size = 1 << 20;
  int block_width = 16;
  int pool_mb = 64;
  int pool_alignment = 64;
  int frames = 0;  // animation length; 0 derives it from the scene

  double fov = 45.0;
  double sigma_factor = 1.0 / 3.0;
  double cutoff_factor = 0.75;

  Vec3 camera_pos{0, 0, -3};
  Vec3 camera_lookat{0, 0, 0};
  Vec3 camera_sky{0, 1, 0};

  std::vector<double> brightness{1.0};  // per ptype; one value applies to all
  std::vector<std::string> colormap;    // per ptype; one path applies to all; none = black to white

  bool log = false;
  bool weight_by_q = true;
  bool blocked = true;

  [[nodiscard]] Camera camera() const { return Camera{camera_pos, camera_lookat, camera_sky, fov}; }

  friend bool operator==(const FrameConfig&, const FrameConfig&) = default;
};

namespace config_detail {

using Field = std::variant<int FrameConfig::*, double FrameConfig::*, Vec3 FrameConfig::*,
                           std::vector<double> FrameConfig::*, bool FrameConfig::*, std::string FrameConfig::*,
                           std::vector<std::string> FrameConfig::*>;

struct KeyInfo {
  std::string_view name;
  Field field;
};

inline const std::vector<KeyInfo>& keys() {
  static const std::vector<KeyInfo> table{
      {"input", &FrameConfig::input},
      {"output", &FrameConfig::output},
      {"timing", &FrameConfig::timing},
      {"width", &FrameConfig::width},
      {"height", &FrameConfig::height},
      {"tile_size", &FrameConfig::tile_size},
      {"workers", &FrameConfig::workers},
      {"chunk_size", &FrameConfig::chunk_size},
      {"block_width", &FrameConfig::block_width},
      {"pool_mb", &FrameConfig::pool_mb},
      {"pool_alignment", &FrameConfig::pool_alignment},
      {"frames", &FrameConfig::frames},
      {"fov", &FrameConfig::fov},
      {"sigma_factor", &FrameConfig::sigma_factor},
      {"cutoff_factor", &FrameConfig::cutoff_factor},
      {"camera_pos", &FrameConfig::camera_pos},
      {"camera_lookat", &FrameConfig::camera_lookat},
      {"camera_sky", &FrameConfig::camera_sky},
      {"brightness", &FrameConfig::brightness},
      {"colormap", &FrameConfig::colormap},
      {"log", &FrameConfig::log},
      {"weight_by_q", &FrameConfig::weight_by_q},
      {"blocked", &FrameConfig::blocked},
  };
  return table;
}

inline const KeyInfo* find_key(std::string_view name) {
  for (const auto& k : keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

inline const KeyInfo& require_key(std::string_view name) {
  const KeyInfo* k = find_key(name);
  if (k == nullptr) throw ConfigError("unknown parameter `" + std::string(name) + "`");
  return *k;
}

inline double parse_number(std::string_view key, const std::string& tok) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (tok.empty() || end != tok.c_str() + tok.size() || !std::isfinite(v)) {
    throw ConfigError("parameter `" + std::string(key) + "`: `" + tok + "` is not a number");
  }
  return v;
}

inline int parse_int(std::string_view key, const std::string& tok) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ConfigError("parameter `" + std::string(key) + "`: `" + tok + "` is not an integer");
  }
  return v;
}

inline bool parse_bool(std::string_view key, const std::string& tok) {
  if (tok == "1" || tok == "true" || tok == "on" || tok == "yes") return true;
  if (tok == "0" || tok == "false" || tok == "off" || tok == "no") return false;
  throw ConfigError("parameter `" + std::string(key) + "`: `" + tok + "` is not a boolean");
}

inline void expect_arity(std::string_view key, std::size_t got, std::size_t want) {
  if (got != want) {
    throw ConfigError("parameter `" + std::string(key) + "` expects " + std::to_string(want) + " value(s), got " +
                      std::to_string(got));
  }
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace config_detail

/// Splits a parameter value on commas and whitespace.
inline std::vector<std::string> split_value(std::string_view value) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : value) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

[[nodiscard]] inline bool is_config_key(std::string_view name) { return config_detail::find_key(name) != nullptr; }

/// True for keys whose values can be interpolated linearly.
[[nodiscard]] inline bool is_numeric_key(std::string_view name) {
  const auto& k = config_detail::require_key(name);
  return !std::holds_alternative<bool FrameConfig::*>(k.field) &&
         !std::holds_alternative<std::string FrameConfig::*>(k.field) &&
         !std::holds_alternative<std::vector<std::string> FrameConfig::*>(k.field);
}

/// Assigns a key from its textual tokens. Throws ConfigError.
inline void set_key(FrameConfig& cfg, std::string_view name, std::span<const std::string> tokens) {
  using namespace config_detail;
  const auto& k = require_key(name);
  std::visit(overloaded{
                 [&](int FrameConfig::*m) {
                   expect_arity(name, tokens.size(), 1);
                   cfg.*m = parse_int(name, tokens[0]);
                 },
                 [&](double FrameConfig::*m) {
                   expect_arity(name, tokens.size(), 1);
                   cfg.*m = parse_number(name, tokens[0]);
                 },
                 [&](Vec3 FrameConfig::*m) {
                   expect_arity(name, tokens.size(), 3);
                   cfg.*m = Vec3{parse_number(name, tokens[0]), parse_number(name, tokens[1]),
                                 parse_number(name, tokens[2])};
                 },
                 [&](std::vector<double> FrameConfig::*m) {
                   if (tokens.empty()) throw ConfigError("parameter `" + std::string(name) + "` needs a value");
                   std::vector<double> v;
                   for (const auto& t : tokens) v.push_back(parse_number(name, t));
                   cfg.*m = std::move(v);
                 },
                 [&](bool FrameConfig::*m) {
                   expect_arity(name, tokens.size(), 1);
                   cfg.*m = parse_bool(name, tokens[0]);
                 },
                 [&](std::string FrameConfig::*m) {
                   expect_arity(name, tokens.size(), 1);
                   cfg.*m = tokens[0];
                 },
                 [&](std::vector<std::string> FrameConfig::*m) {
                   cfg.*m = std::vector<std::string>(tokens.begin(), tokens.end());
                 },
             },
             k.field);
}

inline void set_key(FrameConfig& cfg, std::string_view name, std::string_view value) {
  const auto tokens = split_value(value);
  set_key(cfg, name, std::span<const std::string>(tokens));
}

/// Numeric components of a numeric key.
[[nodiscard]] inline std::vector<double> get_numbers(const FrameConfig& cfg, std::string_view name) {
  using namespace config_detail;
  const auto& k = require_key(name);
  return std::visit(overloaded{
                        [&](int FrameConfig::*m) { return std::vector<double>{static_cast<double>(cfg.*m)}; },
                        [&](double FrameConfig::*m) { return std::vector<double>{cfg.*m}; },
                        [&](Vec3 FrameConfig::*m) {
                          const Vec3 v = cfg.*m;
                          return std::vector<double>{v.x, v.y, v.z};
                        },
                        [&](std::vector<double> FrameConfig::*m) { return cfg.*m; },
                        [&](auto) -> std::vector<double> {
                          throw ConfigError("parameter `" + std::string(name) + "` is not numeric");
                        },
                    },
                    k.field);
}

/// Assigns a numeric key from numbers; integers round to nearest.
inline void set_numbers(FrameConfig& cfg, std::string_view name, std::span<const double> values) {
  using namespace config_detail;
  const auto& k = require_key(name);
  std::visit(overloaded{
                 [&](int FrameConfig::*m) {
                   expect_arity(name, values.size(), 1);
                   cfg.*m = static_cast<int>(std::lround(values[0]));
                 },
                 [&](double FrameConfig::*m) {
                   expect_arity(name, values.size(), 1);
                   cfg.*m = values[0];
                 },
                 [&](Vec3 FrameConfig::*m) {
                   expect_arity(name, values.size(), 3);
                   cfg.*m = Vec3{values[0], values[1], values[2]};
                 },
                 [&](std::vector<double> FrameConfig::*m) {
                   cfg.*m = std::vector<double>(values.begin(), values.end());
                 },
                 [&](auto) { throw ConfigError("parameter `" + std::string(name) + "` is not numeric"); },
             },
             k.field);
}

/// Names of every recognised key, in documentation order.
[[nodiscard]] inline std::vector<std::string_view> config_keys() {
  std::vector<std::string_view> out;
  for (const auto& k : config_detail::keys()) out.push_back(k.name);
  return out;
}

/// Range checks on a fully resolved configuration.
inline void validate(const FrameConfig& cfg) {
  if (cfg.width < 1 || cfg.height < 1) throw ConfigError("width and height must be >= 1");
  if (cfg.tile_size < 1) throw ConfigError("tile_size must be >= 1");
  if (cfg.workers < 1) throw ConfigError("workers must be >= 1");
  if (cfg.chunk_size < 1) throw ConfigError("chunk_size must be >= 1");
  if (cfg.block_width < 1) throw ConfigError("block_width must be >= 1");
  if (cfg.pool_mb < 1) throw ConfigError("pool_mb must be >= 1");
  if (cfg.pool_alignment < 1 || (cfg.pool_alignment & (cfg.pool_alignment - 1)) != 0) {
    throw ConfigError("pool_alignment must be a power of two");
  }
  if (cfg.frames < 0) throw ConfigError("frames must be >= 0");
  if (!(cfg.sigma_factor > 0.0)) throw ConfigError("sigma_factor must be positive");
  if (!(cfg.cutoff_factor > 0.0)) throw ConfigError("cutoff_factor must be positive");
  if (cfg.brightness.empty()) throw ConfigError("brightness needs at least one value");
  for (double b : cfg.brightness) {
    if (!(b >= 0.0)) throw ConfigError("brightness must be non-negative");
  }
  cfg.camera().validate();
}

/// Built-in defaults with SPLATCHER_WORKERS (or the hardware thread count) applied.
[[nodiscard]] inline FrameConfig default_config() {
  FrameConfig cfg;
  cfg.workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("SPLATCHER_WORKERS"); env != nullptr && *env != '\0') {
    cfg.workers = config_detail::parse_int("SPLATCHER_WORKERS", env);
  }
  return cfg;
}

/// Applies `key=value` lines. Unknown keys and malformed lines are ParseErrors.
inline void apply_params(FrameConfig& cfg, std::istream& in, const std::string& name) {
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = detail::strip_comment(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(name, lineno, "expected key=value");
    const std::string key = detail::trim(line.substr(0, eq));
    try {
      set_key(cfg, key, std::string_view(line).substr(eq + 1));
    } catch (const ParseError&) {
      throw;
    } catch (const ConfigError& e) {
      throw ParseError(name, lineno, e.what());
    }
  }
}

inline void load_params(FrameConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(IoErrc::missing_file, path.string());
  apply_params(cfg, in, path.string());
}

/// Applies command-line `key=value` overrides.
inline void apply_overrides(FrameConfig& cfg, std::span<const std::string> overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override `" + o + "` is not key=value");
    set_key(cfg, detail::trim(o.substr(0, eq)), std::string_view(o).substr(eq + 1));
  }
}

// ---------------------------------------------------------------------------
// Scenes: lines `frame key mode value...`, mode in {step, linear}.

enum class Interp { step, linear };

struct Keyframe {
  int frame = 0;
  std::vector<std::string> tokens;
  std::vector<double> numbers;  // parsed tokens for linear keys
};

struct SceneTrack {
  std::string key;
  Interp mode = Interp::step;
  std::vector<Keyframe> keyframes;  // strictly increasing frames
};

struct SceneSequence {
  std::vector<SceneTrack> tracks;

  [[nodiscard]] bool empty() const noexcept { return tracks.empty(); }

  /// Highest keyframe index, or -1 for an empty scene.
  [[nodiscard]] int last_frame() const noexcept {
    int last = -1;
    for (const auto& t : tracks) last = std::max(last, t.keyframes.back().frame);
    return last;
  }
};

inline SceneSequence parse_scene(std::istream& in, const std::string& name) {
  SceneSequence scene;
  std::string raw;
  std::size_t lineno = 0;
  int prev_frame = -1;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = detail::strip_comment(raw);
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string frame_tok, key, mode_tok, tok;
    if (!(ss >> frame_tok >> key >> mode_tok)) throw ParseError(name, lineno, "expected `frame key mode value...`");
    Keyframe kf;
    try {
      kf.frame = config_detail::parse_int("frame", frame_tok);
    } catch (const ConfigError&) {
      throw ParseError(name, lineno, "frame index `" + frame_tok + "` is not an integer");
    }
    if (kf.frame < 0) throw ParseError(name, lineno, "frame index must be >= 0");
    if (kf.frame < prev_frame) throw ParseError(name, lineno, "frame indices must not decrease");
    prev_frame = kf.frame;
    if (!is_config_key(key)) throw ParseError(name, lineno, "unknown key `" + key + "`");

    Interp mode;
    if (mode_tok == "step") {
      mode = Interp::step;
    } else if (mode_tok == "linear") {
      mode = Interp::linear;
    } else {
      throw ParseError(name, lineno, "mode must be step or linear, got `" + mode_tok + "`");
    }
    while (ss >> tok) {
      for (auto& t : split_value(tok)) kf.tokens.push_back(std::move(t));
    }
    if (kf.tokens.empty()) throw ParseError(name, lineno, "missing value");

    try {
      FrameConfig scratch;
      set_key(scratch, key, std::span<const std::string>(kf.tokens));
      if (mode == Interp::linear) {
        if (!is_numeric_key(key)) throw ConfigError("key `" + key + "` cannot be interpolated linearly");
        for (const auto& t : kf.tokens) kf.numbers.push_back(config_detail::parse_number(key, t));
      }
    } catch (const ConfigError& e) {
      throw ParseError(name, lineno, e.what());
    }

    auto it = std::find_if(scene.tracks.begin(), scene.tracks.end(), [&](const SceneTrack& t) { return t.key == key; });
    if (it == scene.tracks.end()) {
      scene.tracks.push_back(SceneTrack{key, mode, {}});
      it = std::prev(scene.tracks.end());
    }
    if (it->mode != mode) throw ParseError(name, lineno, "key `" + key + "` mixes step and linear modes");
    if (!it->keyframes.empty()) {
      if (it->keyframes.back().frame >= kf.frame) {
        throw ParseError(name, lineno, "frames for key `" + key + "` must be strictly increasing");
      }
      if (mode == Interp::linear && it->keyframes.back().numbers.size() != kf.numbers.size()) {
        throw ParseError(name, lineno, "linear key `" + key + "` changes arity");
      }
    }
    it->keyframes.push_back(std::move(kf));
  }
  return scene;
}

inline SceneSequence load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(IoErrc::missing_file, path.string());
  return parse_scene(in, path.string());
}

/// Applies the scene's overrides for `frame` on top of `base`. Step keys take
/// the latest keyframe at or before the frame; linear keys interpolate between
/// bracketing keyframes; frames outside a track clamp to its ends.
[[nodiscard]] inline FrameConfig resolve_frame(const SceneSequence& scene, const FrameConfig& base, int frame) {
  if (frame < 0) throw ConfigError("frame index must be >= 0");
  FrameConfig cfg = base;
  for (const auto& track : scene.tracks) {
    const auto& kfs = track.keyframes;
    // First keyframe strictly after `frame`.
    auto after = std::upper_bound(kfs.begin(), kfs.end(), frame,
                                  [](int f, const Keyframe& k) { return f < k.frame; });
    if (after == kfs.begin()) {
      set_key(cfg, track.key, std::span<const std::string>(kfs.front().tokens));
      continue;
    }
    const Keyframe& lo = *std::prev(after);
    if (track.mode == Interp::step || after == kfs.end() || lo.frame == frame) {
      set_key(cfg, track.key, std::span<const std::string>(lo.tokens));
      continue;
    }
    const Keyframe& hi = *after;
    const double t = static_cast<double>(frame - lo.frame) / static_cast<double>(hi.frame - lo.frame);
    std::vector<double> v(lo.numbers.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = lo.numbers[i] + (hi.numbers[i] - lo.numbers[i]) * t;
    set_numbers(cfg, track.key, v);
  }
  return cfg;
}

}  // namespace splatcher
