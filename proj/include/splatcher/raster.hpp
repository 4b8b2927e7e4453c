#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "splatcher/error.hpp"
#include "splatcher/model.hpp"

namespace splatcher {

/// Precomputed world-to-image mapping. Rows of `rotation` are the camera's
/// right, down and forward axes (right-handed).
struct TransformParams {
  std::array<std::array<double, 3>, 3> rotation{};
  Vec3 translation;  // camera position
  double focal = 0;  // pixels per unit of (lateral / depth)
  double cx = 0, cy = 0;
  double near = 0;
  double radius_scale = 0;  // image radius = r * radius_scale / depth
  double cutoff_factor = 0.75;
  int width = 0, height = 0;
};

[[nodiscard]] inline TransformParams build_transform(const Camera& camera, int width, int height,
                                                     double cutoff_factor = 0.75) {
  camera.validate();
  if (width < 1 || height < 1) throw ConfigError("image dimensions must be positive");
  const Vec3 view = camera.lookat - camera.position;
  const Vec3 forward = normalize(view);
  const Vec3 right = normalize(cross(forward, camera.sky));
  const Vec3 down = cross(forward, right);

  TransformParams t;
  t.rotation = {{{right.x, right.y, right.z}, {down.x, down.y, down.z}, {forward.x, forward.y, forward.z}}};
  t.translation = camera.position;
  t.focal = (height / 2.0) / std::tan(camera.fov_deg * std::numbers::pi / 360.0);
  t.cx = width / 2.0;
  t.cy = height / 2.0;
  t.near = 1e-4 * length(view);
  t.radius_scale = t.focal;
  t.cutoff_factor = cutoff_factor;
  t.width = width;
  t.height = height;
  return t;
}

/// True when the open disk of radius `cut` around (x, y) meets [0,w] x [0,h].
[[nodiscard]] inline bool disk_meets_rect(double x, double y, double cut, double x0, double y0, double x1,
                                          double y1) {
  const double dx = std::max({x0 - x, 0.0, x - x1});
  const double dy = std::max({y0 - y, 0.0, y - y1});
  return dx * dx + dy * dy < cut * cut;
}

/// Roto-translates, projects and clips particles [begin, end) in place.
/// Particles behind the near plane or whose footprint misses the image become
/// inactive and keep their world coordinates.
inline void transform_particles(ParticleChunk& chunk, const TransformParams& t, std::size_t begin, std::size_t end) {
  auto x = chunk.x(), y = chunk.y(), z = chunk.z(), r = chunk.r();
  auto active = chunk.active();
  const auto& R = t.rotation;
  for (std::size_t i = begin; i < end; ++i) {
    const double px = x[i] - t.translation.x;
    const double py = y[i] - t.translation.y;
    const double pz = z[i] - t.translation.z;
    const double cx = R[0][0] * px + R[0][1] * py + R[0][2] * pz;
    const double cy = R[1][0] * px + R[1][1] * py + R[1][2] * pz;
    const double depth = R[2][0] * px + R[2][1] * py + R[2][2] * pz;
    if (!(depth > t.near) || !(r[i] > 0.0f)) {
      active[i] = 0;
      continue;
    }
    const double inv = 1.0 / depth;
    const double sx = t.cx + t.focal * cx * inv;
    const double sy = t.cy + t.focal * cy * inv;
    const double sr = r[i] * t.radius_scale * inv;
    x[i] = static_cast<float>(sx);
    y[i] = static_cast<float>(sy);
    z[i] = static_cast<float>(depth);
    r[i] = static_cast<float>(sr);
    // Clip with the stored single-precision values the renderer will see.
    const double cut = t.cutoff_factor * static_cast<double>(r[i]);
    active[i] = (std::isfinite(cut) && disk_meets_rect(x[i], y[i], cut, 0.0, 0.0, t.width, t.height)) ? 1 : 0;
  }
}

inline void transform_particles(ParticleChunk& chunk, const TransformParams& t) {
  transform_particles(chunk, t, 0, chunk.size());
}

// ---------------------------------------------------------------------------
// Colorize.

/// Per-ptype colour maps and brightness resolved for one frame.
struct ColorTable {
  std::vector<ColorMap> maps;
  std::vector<float> brightness;
  bool weight_by_q = true;

  /// Broadcasts single entries to `ptype_count` types; throws ConfigError
  /// if some ptype would be left without a map or brightness.
  void bind(std::size_t ptype_count) {
    if (maps.empty()) maps.emplace_back();
    if (brightness.empty()) brightness.push_back(1.0f);
    const std::size_t n = std::max<std::size_t>(ptype_count, 1);
    if (maps.size() == 1) maps.resize(n, maps.front());
    if (brightness.size() == 1) brightness.resize(n, brightness.front());
    if (maps.size() < n) {
      throw ConfigError("ptype " + std::to_string(maps.size()) + " has no colour map");
    }
    if (brightness.size() < n) {
      throw ConfigError("ptype " + std::to_string(brightness.size()) + " has no brightness");
    }
  }
};

/// Reference path: one particle at a time, binary search into the map.
inline void colorize_scalar(ParticleChunk& chunk, const ColorTable& table, std::size_t begin, std::size_t end) {
  const auto q = chunk.q();
  const auto ptype = chunk.ptype();
  const auto active = chunk.active();
  auto red = chunk.red(), green = chunk.green(), blue = chunk.blue();
  for (std::size_t i = begin; i < end; ++i) {
    if (!active[i]) continue;
    const ColorMap& map = table.maps[ptype[i]];
    const Rgb c = map.interpolate(map.segment(q[i]), q[i]);
    const float w = table.weight_by_q ? q[i] : 1.0f;
    const float b = table.brightness[ptype[i]];
    red[i] = c.r * w * b;
    green[i] = c.g * w * b;
    blue[i] = c.b * w * b;
  }
}

inline constexpr int kMaxBlockWidth = 64;

/// Blocked path: particles in groups of `block_width` lanes, segment search by
/// branch-free counting per lane, scalar remainder loop. Produces the same
/// bits as colorize_scalar.
inline void colorize_blocked(ParticleChunk& chunk, const ColorTable& table, std::size_t begin, std::size_t end,
                             int block_width = 16) {
  if (block_width < 1 || block_width > kMaxBlockWidth) {
    throw ConfigError("block_width must lie in [1, " + std::to_string(kMaxBlockWidth) + "]");
  }
  const auto q = chunk.q();
  const auto ptype = chunk.ptype();
  const auto active = chunk.active();
  auto red = chunk.red(), green = chunk.green(), blue = chunk.blue();

  const std::size_t width = static_cast<std::size_t>(block_width);
  const std::size_t full_end = begin + (end - begin) / width * width;

  std::array<float, kMaxBlockWidth> lq, lr, lg, lb, lw, lbright;
  std::array<std::uint32_t, kMaxBlockWidth> seg;

  for (std::size_t base = begin; base < full_end; base += width) {
    const std::uint32_t type0 = ptype[base];
    bool uniform = true;
    for (std::size_t l = 0; l < width; ++l) uniform &= ptype[base + l] == type0;
    for (std::size_t l = 0; l < width; ++l) {
      lq[l] = q[base + l];
      lw[l] = table.weight_by_q ? lq[l] : 1.0f;
      lbright[l] = table.brightness[ptype[base + l]];
    }

    if (uniform) {
      const auto stops = table.maps[type0].stops();
      for (std::size_t l = 0; l < width; ++l) seg[l] = 0;
      for (std::size_t s = 1; s + 1 < stops.size(); ++s) {
        const float t = stops[s].t;
        for (std::size_t l = 0; l < width; ++l) seg[l] += lq[l] >= t ? 1u : 0u;
      }
      for (std::size_t l = 0; l < width; ++l) {
        const ColorStop& a = stops[seg[l]];
        const ColorStop& b = stops[seg[l] + 1];
        const float f = std::clamp((lq[l] - a.t) / (b.t - a.t), 0.0f, 1.0f);
        const float g = 1.0f - f;
        lr[l] = a.r * g + b.r * f;
        lg[l] = a.g * g + b.g * f;
        lb[l] = a.b * g + b.b * f;
      }
    } else {
      for (std::size_t l = 0; l < width; ++l) {
        const auto stops = table.maps[ptype[base + l]].stops();
        std::uint32_t k = 0;
        for (std::size_t s = 1; s + 1 < stops.size(); ++s) k += lq[l] >= stops[s].t ? 1u : 0u;
        const ColorStop& a = stops[k];
        const ColorStop& b = stops[k + 1];
        const float f = std::clamp((lq[l] - a.t) / (b.t - a.t), 0.0f, 1.0f);
        const float g = 1.0f - f;
        lr[l] = a.r * g + b.r * f;
        lg[l] = a.g * g + b.g * f;
        lb[l] = a.b * g + b.b * f;
      }
    }

    for (std::size_t l = 0; l < width; ++l) {
      if (!active[base + l]) continue;
      red[base + l] = lr[l] * lw[l] * lbright[l];
      green[base + l] = lg[l] * lw[l] * lbright[l];
      blue[base + l] = lb[l] * lw[l] * lbright[l];
    }
  }
  colorize_scalar(chunk, table, full_end, end);
}

}  // namespace splatcher
