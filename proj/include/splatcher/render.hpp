#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "splatcher/error.hpp"
#include "splatcher/mempool.hpp"
#include "splatcher/model.hpp"
#include "splatcher/parallel.hpp"

namespace splatcher {

// ---------------------------------------------------------------------------
// Tiles.

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct TileRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  friend bool operator==(const TileRect&, const TileRect&) = default;
};

/// Square-tile decomposition of the image. Edge tiles may be narrower; their
/// centre stays at the centre of the nominal tile_size square, whose
/// circumscribed circle still covers them.
class TileGrid {
 public:
  TileGrid() = default;
  TileGrid(int width, int height, int tile_size)
      : width_(width), height_(height), tile_size_(tile_size),
        nx_((width + tile_size - 1) / tile_size), ny_((height + tile_size - 1) / tile_size) {
    if (width < 1 || height < 1 || tile_size < 1) throw ConfigError("tile grid arguments must be >= 1");
  }

  [[nodiscard]] int width() const noexcept { return width_; }
  [[nodiscard]] int height() const noexcept { return height_; }
  [[nodiscard]] int tile_size() const noexcept { return tile_size_; }
  [[nodiscard]] int nx() const noexcept { return nx_; }
  [[nodiscard]] int ny() const noexcept { return ny_; }
  [[nodiscard]] std::size_t tile_count() const noexcept { return static_cast<std::size_t>(nx_) * ny_; }
  [[nodiscard]] std::size_t tile_id(int tx, int ty) const noexcept {
    return static_cast<std::size_t>(ty) * nx_ + tx;
  }

  [[nodiscard]] TileRect rect(std::size_t id) const noexcept {
    const int tx = static_cast<int>(id % nx_);
    const int ty = static_cast<int>(id / nx_);
    return {tx * tile_size_, ty * tile_size_, std::min(width_, (tx + 1) * tile_size_),
            std::min(height_, (ty + 1) * tile_size_)};
  }

  [[nodiscard]] std::array<double, 2> center(std::size_t id) const noexcept {
    const auto tx = static_cast<double>(id % nx_);
    const auto ty = static_cast<double>(id / nx_);
    return {(tx + 0.5) * tile_size_, (ty + 0.5) * tile_size_};
  }

 private:
  int width_ = 0, height_ = 0, tile_size_ = 0, nx_ = 0, ny_ = 0;
};

[[nodiscard]] inline TileGrid decompose(int width, int height, int tile_size) {
  return TileGrid(width, height, tile_size);
}

// ---------------------------------------------------------------------------
// Splat kernel.

struct SplatParams {
  float sigma_factor = 1.0f / 3.0f;  // sigma = r * sigma_factor
  float cutoff_factor = 0.75f;       // footprint radius = r * cutoff_factor
};

/// Everything the pixel loops need for one particle.
struct Footprint {
  float x = 0, y = 0;
  float cut = 0;   // footprint radius
  float cut2 = 0;  // cut * cut; pixels with s^2 < cut2 are touched
  float inv_two_sigma2 = 0;
  float red = 0, green = 0, blue = 0;
};

[[nodiscard]] inline Footprint footprint(const ParticleChunk& c, std::size_t i, const SplatParams& p) {
  Footprint f;
  f.x = c.x()[i];
  f.y = c.y()[i];
  const float r = c.r()[i];
  f.cut = p.cutoff_factor * r;
  f.cut2 = f.cut * f.cut;
  const float sigma = r * p.sigma_factor;
  f.inv_two_sigma2 = 1.0f / (2.0f * sigma * sigma);
  f.red = c.red()[i];
  f.green = c.green()[i];
  f.blue = c.blue()[i];
  return f;
}

/// Gaussian weight for squared pixel distance s2.
[[nodiscard]] inline float splat_weight(float s2, float inv_two_sigma2) noexcept {
  return std::exp(-s2 * inv_two_sigma2);
}

/// Integer pixel span [lo, hi] whose samples may lie within `cut` of `center`,
/// clipped to [clip_lo, clip_hi). Empty when lo > hi.
[[nodiscard]] inline std::array<int, 2> pixel_span(float center, float cut, int clip_lo, int clip_hi) noexcept {
  const double lo = std::ceil(static_cast<double>(center) - cut);
  const double hi = std::floor(static_cast<double>(center) + cut);
  const int a = static_cast<int>(std::clamp(lo, static_cast<double>(clip_lo), static_cast<double>(clip_hi)));
  const int b = static_cast<int>(std::clamp(hi, static_cast<double>(clip_lo) - 1, static_cast<double>(clip_hi) - 1));
  return {a, b};
}

/// Adds one particle into the pixels of `rect`, one pixel at a time.
inline void splat_scalar(Image& img, const Footprint& f, const TileRect& rect) {
  const auto [px0, px1] = pixel_span(f.x, f.cut, rect.x0, rect.x1);
  const auto [py0, py1] = pixel_span(f.y, f.cut, rect.y0, rect.y1);
  for (int py = py0; py <= py1; ++py) {
    const float dy = static_cast<float>(py) - f.y;
    const float dy2 = dy * dy;
    Rgb* row = img.row(py);
    for (int px = px0; px <= px1; ++px) {
      const float dx = static_cast<float>(px) - f.x;
      const float s2 = dx * dx + dy2;
      if (!(s2 < f.cut2)) continue;
      const float w = splat_weight(s2, f.inv_two_sigma2);
      row[px].r += f.red * w;
      row[px].g += f.green * w;
      row[px].b += f.blue * w;
    }
  }
}

inline constexpr int kPixelLanes = 8;

/// Same accumulation as splat_scalar, with weights for kPixelLanes pixels of a
/// row computed together and applied as a packed multiply-add. Lanes outside
/// the footprint get weight zero, which leaves their pixels unchanged.
inline void splat_blocked(Image& img, const Footprint& f, const TileRect& rect) {
  const auto [px0, px1] = pixel_span(f.x, f.cut, rect.x0, rect.x1);
  const auto [py0, py1] = pixel_span(f.y, f.cut, rect.y0, rect.y1);
  std::array<float, kPixelLanes> w{};
  for (int py = py0; py <= py1; ++py) {
    const float dy = static_cast<float>(py) - f.y;
    const float dy2 = dy * dy;
    Rgb* row = img.row(py);
    int px = px0;
    for (; px + kPixelLanes - 1 <= px1; px += kPixelLanes) {
      for (int l = 0; l < kPixelLanes; ++l) {
        const float dx = static_cast<float>(px + l) - f.x;
        const float s2 = dx * dx + dy2;
        w[l] = s2 < f.cut2 ? splat_weight(s2, f.inv_two_sigma2) : 0.0f;
      }
      Rgb* dst = row + px;
      for (int l = 0; l < kPixelLanes; ++l) {
        dst[l].r += f.red * w[l];
        dst[l].g += f.green * w[l];
        dst[l].b += f.blue * w[l];
      }
    }
    for (; px <= px1; ++px) {
      const float dx = static_cast<float>(px) - f.x;
      const float s2 = dx * dx + dy2;
      if (!(s2 < f.cut2)) continue;
      const float wt = splat_weight(s2, f.inv_two_sigma2);
      row[px].r += f.red * wt;
      row[px].g += f.green * wt;
      row[px].b += f.blue * wt;
    }
  }
}

// ---------------------------------------------------------------------------
// Particle-to-tile assignment.

using IndexList = PoolArray<std::uint32_t>;

/// Per-worker, per-tile particle index lists. Worker w's lists draw their
/// storage from pools[w]; the pools must outlive the bins.
class TileBins {
 public:
  TileBins(std::span<Pool> pools, std::size_t tiles) : tiles_(tiles) {
    lists_.reserve(pools.size());
    for (auto& pool : pools) {
      std::vector<IndexList> worker;
      worker.reserve(tiles);
      for (std::size_t t = 0; t < tiles; ++t) worker.emplace_back(pool);
      lists_.push_back(std::move(worker));
    }
  }

  [[nodiscard]] int workers() const noexcept { return static_cast<int>(lists_.size()); }
  [[nodiscard]] std::size_t tiles() const noexcept { return tiles_; }

  IndexList& list(int worker, std::size_t tile) { return lists_[static_cast<std::size_t>(worker)][tile]; }
  [[nodiscard]] const IndexList& list(int worker, std::size_t tile) const {
    return lists_[static_cast<std::size_t>(worker)][tile];
  }

  /// Empties worker w's lists, keeping their storage.
  void clear(int worker) {
    for (auto& l : lists_[static_cast<std::size_t>(worker)]) l.clear();
  }

  /// Returns every list's storage to its pool.
  void release() {
    for (auto& worker : lists_) {
      for (auto& l : worker) l.release();
    }
  }

 private:
  std::size_t tiles_;
  std::vector<std::vector<IndexList>> lists_;
};

/// Tile-assignment distance threshold: footprint radius plus the radius of
/// the circle circumscribing a tile. A relative slack of 1e-6 absorbs
/// single-precision rounding in the pixel test so no touched tile is missed.
[[nodiscard]] inline double tile_threshold(float footprint_radius, int tile_size) {
  return (static_cast<double>(footprint_radius) + std::numbers::sqrt2 * tile_size / 2.0) * (1.0 + 1e-6);
}

/// Lists the active particles of [begin, end) in every tile whose centre lies
/// within tile_threshold() of the particle, scanning only tiles overlapped by
/// the footprint's bounding box. Appends to worker `worker`'s lists.
inline void assign_range(const ParticleChunk& chunk, const TileGrid& grid, std::size_t begin, std::size_t end,
                         float cutoff_factor, TileBins& bins, int worker) {
  const auto x = chunk.x(), y = chunk.y(), r = chunk.r();
  const auto active = chunk.active();
  const double ts = grid.tile_size();
  for (std::size_t i = begin; i < end; ++i) {
    if (!active[i]) continue;
    const float cut = cutoff_factor * r[i];
    const auto clamp_tile = [](double v, int n) {
      return static_cast<int>(std::clamp(std::floor(v), 0.0, static_cast<double>(n - 1)));
    };
    const int tx0 = clamp_tile((x[i] - static_cast<double>(cut)) / ts, grid.nx());
    const int tx1 = clamp_tile((x[i] + static_cast<double>(cut)) / ts, grid.nx());
    const int ty0 = clamp_tile((y[i] - static_cast<double>(cut)) / ts, grid.ny());
    const int ty1 = clamp_tile((y[i] + static_cast<double>(cut)) / ts, grid.ny());
    const double threshold = tile_threshold(cut, grid.tile_size());
    const double threshold2 = threshold * threshold;
    for (int tx = tx0; tx <= tx1; ++tx) {
      const double dx = x[i] - (tx + 0.5) * ts;
      for (int ty = ty0; ty <= ty1; ++ty) {
        const double dy = y[i] - (ty + 0.5) * ts;
        if (dx * dx + dy * dy < threshold2) {
          bins.list(worker, grid.tile_id(tx, ty)).push_back(static_cast<std::uint32_t>(i));
        }
      }
    }
  }
}

/// Splits the chunk contiguously across bins.workers() workers and builds
/// every worker's lists in parallel; each worker's lists grow only from its
/// own pool.
inline void assign_particles_to_tiles(const ParticleChunk& chunk, const TileGrid& grid, float cutoff_factor,
                                      TileBins& bins) {
  if (bins.tiles() != grid.tile_count()) throw InvariantError("tile bins do not match the grid");
  if (chunk.size() > UINT32_MAX) throw InvariantError("chunk too large for 32-bit particle indices");
  const int W = bins.workers();
  run_workers(W, [&](int w) {
    bins.clear(w);
    const auto [b, e] = worker_range(chunk.size(), w, W);
    assign_range(chunk, grid, b, e, cutoff_factor, bins, w);
  });
}

// ---------------------------------------------------------------------------
// Rendering.

/// Renders one tile: lists are visited by worker id, each in ascending
/// particle index, so per-pixel accumulation order is global index order.
inline void render_tile(std::size_t tile, const TileBins& bins, const ParticleChunk& chunk, const TileGrid& grid,
                        const SplatParams& params, Image& img, bool blocked) {
  const TileRect rect = grid.rect(tile);
  for (int w = 0; w < bins.workers(); ++w) {
    for (std::uint32_t idx : bins.list(w, tile)) {
      const Footprint f = footprint(chunk, idx, params);
      if (blocked) {
        splat_blocked(img, f, rect);
      } else {
        splat_scalar(img, f, rect);
      }
    }
  }
}

/// Renders every tile into `img` with `workers` threads pulling tiles from a
/// shared atomic cursor. A tile's pixels are written only by the worker that
/// took it.
inline void render_tiles(const TileBins& bins, const ParticleChunk& chunk, const TileGrid& grid,
                         const SplatParams& params, Image& img, int workers, bool blocked = true) {
  if (img.width() != grid.width() || img.height() != grid.height()) {
    throw InvariantError("image does not match the tile grid");
  }
  std::atomic<std::size_t> next{0};
  const std::size_t tiles = grid.tile_count();
  run_workers(workers, [&](int) {
    for (std::size_t t = next.fetch_add(1, std::memory_order_relaxed); t < tiles;
         t = next.fetch_add(1, std::memory_order_relaxed)) {
      render_tile(t, bins, chunk, grid, params, img, blocked);
    }
  });
}

/// Brute-force oracle: every active particle in index order splatted against
/// the whole image, no tiles, no threads.
inline void reference_render_into(const ParticleChunk& chunk, const SplatParams& params, Image& img) {
  const auto active = chunk.active();
  for (std::size_t i = 0; i < chunk.size(); ++i) {
    if (!active[i]) continue;
    const Footprint f = footprint(chunk, i, params);
    const double xlo = std::max(0.0, std::ceil(f.x - static_cast<double>(f.cut)));
    const double xhi = std::min(img.width() - 1.0, std::floor(f.x + static_cast<double>(f.cut)));
    const double ylo = std::max(0.0, std::ceil(f.y - static_cast<double>(f.cut)));
    const double yhi = std::min(img.height() - 1.0, std::floor(f.y + static_cast<double>(f.cut)));
    for (double py = ylo; py <= yhi; ++py) {
      for (double px = xlo; px <= xhi; ++px) {
        const float dx = static_cast<float>(px) - f.x;
        const float dy = static_cast<float>(py) - f.y;
        const float s2 = dx * dx + dy * dy;
        if (!(s2 < f.cut2)) continue;
        const float w = splat_weight(s2, f.inv_two_sigma2);
        Rgb& pix = img.at(static_cast<int>(px), static_cast<int>(py));
        pix.r += f.red * w;
        pix.g += f.green * w;
        pix.b += f.blue * w;
      }
    }
  }
}

[[nodiscard]] inline Image reference_render(const ParticleChunk& chunk, int width, int height,
                                            const SplatParams& params = {}) {
  Image img(width, height);
  reference_render_into(chunk, params, img);
  return img;
}

/// dst += src per channel.
inline void composite(Image& dst, const Image& src) {
  if (dst.width() != src.width() || dst.height() != src.height()) {
    throw InvariantError("composite of images with different dimensions");
  }
  auto d = dst.pixels();
  auto s = src.pixels();
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i].r += s[i].r;
    d[i].g += s[i].g;
    d[i].b += s[i].b;
  }
}

}  // namespace splatcher
