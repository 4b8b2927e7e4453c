#pragma once

// Frame orchestration: range pass, double-buffered render pass, tone mapping,
// animations and the tuning benchmark.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "splatcher/config.hpp"
#include "splatcher/error.hpp"
#include "splatcher/ingest.hpp"
#include "splatcher/mempool.hpp"
#include "splatcher/model.hpp"
#include "splatcher/parallel.hpp"
#include "splatcher/preprocess.hpp"
#include "splatcher/raster.hpp"
#include "splatcher/render.hpp"

namespace splatcher {

enum class Kernel : std::size_t { read, transform, colorize, assign, render, composite, tonemap, write, count };

inline constexpr std::array<const char*, static_cast<std::size_t>(Kernel::count)> kKernelNames{
    "read", "transform", "colorize", "assign", "render", "composite", "tonemap", "write"};

struct PipelineStats {
  /// Wall seconds per kernel. `read` is the time the compute stage waited on
  /// the reader; `transform` includes quantity normalisation.
  std::array<double, static_cast<std::size_t>(Kernel::count)> seconds{};
  std::uint64_t particles = 0;
  std::uint64_t chunks = 0;
  std::uint64_t frames = 0;
  std::uint64_t log_clamped = 0;  // non-positive q replaced under log
  double read_busy_seconds = 0;   // time the reader spent reading
  PoolStats allocator;

  double& operator[](Kernel k) noexcept { return seconds[static_cast<std::size_t>(k)]; }
  double operator[](Kernel k) const noexcept { return seconds[static_cast<std::size_t>(k)]; }

  [[nodiscard]] double kernel_total() const noexcept {
    double s = 0;
    for (double v : seconds) s += v;
    return s;
  }

  /// Fraction of reading hidden behind computation, in [0, 1].
  [[nodiscard]] double overlap_ratio() const noexcept {
    if (read_busy_seconds <= 0) return 0;
    return std::clamp(1.0 - (*this)[Kernel::read] / read_busy_seconds, 0.0, 1.0);
  }

  PipelineStats& operator+=(const PipelineStats& o) {
    for (std::size_t i = 0; i < seconds.size(); ++i) seconds[i] += o.seconds[i];
    particles += o.particles;
    chunks += o.chunks;
    frames += o.frames;
    log_clamped += o.log_clamped;
    read_busy_seconds += o.read_busy_seconds;
    allocator += o.allocator;
    return *this;
  }
};

namespace pipeline_detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename Fn>
double timed(Fn&& fn) {
  const auto t0 = Clock::now();
  fn();
  return seconds_since(t0);
}

inline std::size_t chunk_capacity(const FrameConfig& cfg, const DatasetHandle& handle) {
  const std::uint64_t total = std::max<std::uint64_t>(handle.total_count(), 1);
  return static_cast<std::size_t>(std::min<std::uint64_t>(static_cast<std::uint64_t>(cfg.chunk_size), total));
}

}  // namespace pipeline_detail

// ---------------------------------------------------------------------------
// Range pass.

/// Streams the whole dataset once and returns the q scale for the render
/// pass. The handle is rewound before and after. Throws IoError on an empty
/// dataset or, under log, on a dataset without positive q.
[[nodiscard]] inline QuantityScale range_pass(DatasetHandle& handle, const FrameConfig& cfg) {
  handle.rewind();
  ParticleChunk chunk = ParticleChunk::create(pipeline_detail::chunk_capacity(cfg, handle));
  std::optional<FieldRange> raw;
  float min_pos = std::numeric_limits<float>::infinity();
  std::uint64_t seen = 0;
  while (handle.read_chunk(chunk) > 0) {
    raw = compute_range(chunk, raw, seen);
    min_pos = min_positive(chunk, min_pos);
    seen += chunk.size();
  }
  handle.rewind();
  if (!raw) throw IoError(IoErrc::bad_record, handle.path().string() + ": no particles");

  QuantityScale scale;
  scale.use_log = cfg.log;
  if (!cfg.log) {
    scale.range = *raw;
    return scale;
  }
  if (!(raw->max > 0.0f)) throw IoError(IoErrc::bad_record, handle.path().string() + ": no positive q for log");
  // log10 is monotone and non-positive q map to log10(min_pos), so these are
  // exactly the extremes of the transformed values.
  scale.log_floor = std::log10(min_pos);
  scale.range = FieldRange{scale.log_floor, std::log10(raw->max)};
  return scale;
}

// ---------------------------------------------------------------------------
// Colour table from config.

[[nodiscard]] inline ColorTable make_color_table(const FrameConfig& cfg, std::size_t ptype_count) {
  ColorTable table;
  for (const auto& path : cfg.colormap) table.maps.push_back(load_colormap(path));
  for (double b : cfg.brightness) table.brightness.push_back(static_cast<float>(b));
  table.weight_by_q = cfg.weight_by_q;
  table.bind(ptype_count);
  return table;
}

// ---------------------------------------------------------------------------
// Double buffer.

enum class SlotState { drained, filling, ready, processing };

struct ChunkSlot {
  ParticleChunk chunk;
  SlotState state = SlotState::drained;
};

struct FrameResult {
  Image image;
  PipelineStats stats;
};

/// Owns one pool per worker and reuses it across chunks and frames.
class FrameRenderer {
 public:
  struct Options {
    /// Called on the reader thread after each chunk read (test hook).
    std::function<void(std::size_t chunk_index)> after_read;
  };

  explicit FrameRenderer(const FrameConfig& cfg, Options options = {}) : options_(std::move(options)) {
    ensure_pools(cfg);
  }

  [[nodiscard]] int workers() const noexcept { return static_cast<int>(pools_.size()); }
  [[nodiscard]] std::span<const Pool> pools() const noexcept { return pools_; }

  /// Streams every chunk through transform, colorize, assign and render,
  /// accumulating into one image. The next chunk is read while the current
  /// one is processed.
  FrameResult run_frame(const FrameConfig& cfg, DatasetHandle& handle, const QuantityScale& scale) {
    using namespace pipeline_detail;
    validate(cfg);
    ensure_pools(cfg);

    const TransformParams xform = build_transform(cfg.camera(), cfg.width, cfg.height, cfg.cutoff_factor);
    const ColorTable colors = make_color_table(cfg, handle.ptype_count());
    const TileGrid grid(cfg.width, cfg.height, cfg.tile_size);
    const SplatParams splat{static_cast<float>(cfg.sigma_factor), static_cast<float>(cfg.cutoff_factor)};
    if (cfg.block_width > kMaxBlockWidth) throw ConfigError("block_width too large");

    FrameResult result{Image(cfg.width, cfg.height), {}};
    PipelineStats& stats = result.stats;
    stats.frames = 1;
    const PoolStats pool_before = pool_stats();

    TileBins bins(pools_, grid.tile_count());
    const std::size_t capacity = chunk_capacity(cfg, handle);
    std::array<ChunkSlot, 2> slots{ChunkSlot{ParticleChunk::create(capacity)},
                                   ChunkSlot{ParticleChunk::create(capacity)}};

    std::mutex m;
    std::condition_variable cv;
    bool done = false;
    bool stop = false;
    std::exception_ptr read_error;
    handle.rewind();

    std::thread reader([&] {
      std::size_t s = 0;
      for (std::size_t index = 0;; ++index, s ^= 1) {
        {
          std::unique_lock lock(m);
          cv.wait(lock, [&] { return stop || slots[s].state == SlotState::drained; });
          if (stop) return;
          slots[s].state = SlotState::filling;
        }
        std::size_t n = 0;
        try {
          const auto t0 = Clock::now();
          n = handle.read_chunk(slots[s].chunk);
          if (n > 0 && options_.after_read) options_.after_read(index);
          stats.read_busy_seconds += seconds_since(t0);
        } catch (...) {
          std::lock_guard lock(m);
          read_error = std::current_exception();
          done = true;
          cv.notify_all();
          return;
        }
        std::lock_guard lock(m);
        if (n == 0) {
          slots[s].state = SlotState::drained;
          done = true;
          cv.notify_all();
          return;
        }
        slots[s].state = SlotState::ready;
        cv.notify_all();
      }
    });

    auto shutdown = [&] {
      {
        std::lock_guard lock(m);
        stop = true;
      }
      cv.notify_all();
      reader.join();
    };

    try {
      std::size_t s = 0;
      for (;; s ^= 1) {
        {
          const auto t0 = Clock::now();
          std::unique_lock lock(m);
          cv.wait(lock, [&] { return slots[s].state == SlotState::ready || done; });
          stats[Kernel::read] += seconds_since(t0);
          if (slots[s].state != SlotState::ready) break;
          slots[s].state = SlotState::processing;
        }
        process_chunk(slots[s].chunk, scale, xform, colors, grid, splat, cfg, bins, result.image, stats);
        {
          std::lock_guard lock(m);
          slots[s].state = SlotState::drained;
        }
        cv.notify_all();
      }
    } catch (...) {
      shutdown();
      throw;
    }
    shutdown();
    if (read_error) std::rethrow_exception(read_error);

    bins.release();
    const PoolStats after = pool_stats();
    stats.allocator = after;
    stats.allocator.allocs -= pool_before.allocs;
    stats.allocator.frees -= pool_before.frees;
    stats.allocator.fallbacks -= pool_before.fallbacks;
    stats.allocator.bad_frees -= pool_before.bad_frees;
    return result;
  }

 private:
  void ensure_pools(const FrameConfig& cfg) {
    const auto bytes = static_cast<std::size_t>(cfg.pool_mb) << 20;
    const auto align = static_cast<std::size_t>(cfg.pool_alignment);
    if (static_cast<int>(pools_.size()) == cfg.workers && pool_bytes_ == bytes && pool_align_ == align) return;
    pools_.clear();
    pools_.reserve(static_cast<std::size_t>(cfg.workers));
    for (int w = 0; w < cfg.workers; ++w) {
      PoolOptions opts;
      opts.owner = w;
      opts.prefault = false;
      pools_.emplace_back(bytes, align, opts);
    }
    pool_bytes_ = bytes;
    pool_align_ = align;
  }

  [[nodiscard]] PoolStats pool_stats() const {
    PoolStats s;
    for (const auto& p : pools_) s += p.stats();
    return s;
  }

  void process_chunk(ParticleChunk& chunk, const QuantityScale& scale, const TransformParams& xform,
                     const ColorTable& colors, const TileGrid& grid, const SplatParams& splat,
                     const FrameConfig& cfg, TileBins& bins, Image& img, PipelineStats& stats) {
    using namespace pipeline_detail;
    const int W = workers();
    const std::size_t n = chunk.size();

    std::vector<std::size_t> clamped(static_cast<std::size_t>(W), 0);
    stats[Kernel::transform] += timed([&] {
      run_workers(W, [&](int w) {
        const auto [b, e] = worker_range(n, w, W);
        clamped[static_cast<std::size_t>(w)] = prepare_quantity(chunk, scale, b, e);
        transform_particles(chunk, xform, b, e);
      });
    });
    for (auto c : clamped) stats.log_clamped += c;

    stats[Kernel::colorize] += timed([&] {
      run_workers(W, [&](int w) {
        const auto [b, e] = worker_range(n, w, W);
        if (cfg.blocked) {
          colorize_blocked(chunk, colors, b, e, cfg.block_width);
        } else {
          colorize_scalar(chunk, colors, b, e);
        }
      });
    });

    stats[Kernel::assign] += timed([&] { assign_particles_to_tiles(chunk, grid, splat.cutoff_factor, bins); });
    stats[Kernel::render] += timed([&] { render_tiles(bins, chunk, grid, splat, img, W, cfg.blocked); });

    stats.particles += n;
    stats.chunks += 1;
  }

  Options options_;
  std::vector<Pool> pools_;
  std::size_t pool_bytes_ = 0;
  std::size_t pool_align_ = 0;
};

inline FrameResult run_frame(const FrameConfig& cfg, DatasetHandle& handle, const QuantityScale& scale) {
  FrameRenderer renderer(cfg);
  return renderer.run_frame(cfg, handle, scale);
}

/// run_frame with the chunk split across `workers` in-process partitions.
inline FrameResult run_multiworker(FrameConfig cfg, DatasetHandle& handle, const QuantityScale& scale, int workers) {
  if (workers < 1) throw ConfigError("workers must be >= 1");
  cfg.workers = workers;
  return run_frame(cfg, handle, scale);
}

// ---------------------------------------------------------------------------
// Tone mapping.

/// clamp(v, 0, 1), then round(v * 255) with ties away from zero.
[[nodiscard]] inline std::uint8_t quantize(float v) noexcept {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::round(c * 255.0f));
}

[[nodiscard]] inline Rgb8Image tonemap(const Image& img) {
  Rgb8Image out{img.width(), img.height(), {}};
  out.data.reserve(img.pixels().size() * 3);
  for (const Rgb& p : img.pixels()) {
    out.data.push_back(quantize(p.r));
    out.data.push_back(quantize(p.g));
    out.data.push_back(quantize(p.b));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Timing report: CSV `frame,kernel,seconds,particles`.

inline void write_timing_csv(std::ostream& out, std::span<const PipelineStats> frames) {
  out << "frame,kernel,seconds,particles\n";
  char buf[64];
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (std::size_t k = 0; k < kKernelNames.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.9f", frames[f].seconds[k]);
      out << f << ',' << kKernelNames[k] << ',' << buf << ',' << frames[f].particles << '\n';
    }
  }
}

inline void write_timing_csv(const std::filesystem::path& path, std::span<const PipelineStats> frames) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(IoErrc::write_failure, path.string());
  write_timing_csv(out, frames);
  if (!out) throw IoError(IoErrc::write_failure, path.string());
}

/// Renders one frame, tone maps it and writes it to cfg.output.
inline PipelineStats render_to_file(FrameRenderer& renderer, const FrameConfig& cfg, DatasetHandle& handle,
                                    const QuantityScale& scale, const std::filesystem::path& output) {
  using namespace pipeline_detail;
  FrameResult r = renderer.run_frame(cfg, handle, scale);
  Rgb8Image bytes;
  r.stats[Kernel::tonemap] = timed([&] { bytes = tonemap(r.image); });
  r.stats[Kernel::write] = timed([&] { write_ppm(output, bytes); });
  return r.stats;
}

// ---------------------------------------------------------------------------
// Animation.

/// `<output without .ppm>_%05d.ppm`
[[nodiscard]] inline std::filesystem::path frame_path(const std::string& output, int frame) {
  std::filesystem::path base(output);
  if (base.extension() == ".ppm") base.replace_extension();
  char suffix[32];
  std::snprintf(suffix, sizeof suffix, "_%05d.ppm", frame);
  return base.string() + suffix;
}

struct AnimationResult {
  std::vector<std::filesystem::path> files;
  std::vector<PipelineStats> frames;

  /// Per-frame average of every kernel time.
  [[nodiscard]] PipelineStats average() const {
    PipelineStats avg;
    for (const auto& f : frames) avg += f;
    if (!frames.empty()) {
      for (double& s : avg.seconds) s /= static_cast<double>(frames.size());
    }
    return avg;
  }
};

/// Number of frames an animation renders: `frames` if positive, else
/// base.frames if positive, else one past the scene's last keyframe.
[[nodiscard]] inline int animation_length(const FrameConfig& base, const SceneSequence& scene, int frames = 0) {
  if (frames > 0) return frames;
  if (base.frames > 0) return base.frames;
  return std::max(1, scene.last_frame() + 1);
}

inline AnimationResult run_animation(const FrameConfig& base, const SceneSequence& scene, int frames = 0) {
  const int count = animation_length(base, scene, frames);
  AnimationResult result;
  std::optional<FrameRenderer> renderer;
  std::map<std::pair<std::string, bool>, QuantityScale> scales;
  for (int f = 0; f < count; ++f) {
    try {
      const FrameConfig cfg = resolve_frame(scene, base, f);
      validate(cfg);
      if (!renderer) renderer.emplace(cfg);
      DatasetHandle handle = open_dataset(cfg.input);
      auto key = std::make_pair(cfg.input, cfg.log);
      auto it = scales.find(key);
      if (it == scales.end()) it = scales.emplace(key, range_pass(handle, cfg)).first;
      const auto path = frame_path(cfg.output, f);
      result.frames.push_back(render_to_file(*renderer, cfg, handle, it->second, path));
      result.files.push_back(path);
    } catch (const ConfigError& e) {
      throw ConfigError("frame " + std::to_string(f) + ": " + e.what());
    } catch (const IoError& e) {
      throw IoError(e.code(), "frame " + std::to_string(f) + ": " + e.what());
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Benchmark sweep.

struct BenchRow {
  int tile_size = 0;
  int workers = 0;
  PipelineStats stats;
  double total = 0;  // wall seconds for render + tonemap + write
  bool best = false;
};

/// Renders the configured frame once per (tile_size, workers) pair and flags
/// the fastest row.
inline std::vector<BenchRow> bench(const FrameConfig& base, DatasetHandle& handle, std::span<const int> tile_sizes,
                                   std::span<const int> worker_counts,
                                   const std::filesystem::path& scratch_image =
                                       std::filesystem::temp_directory_path() / "splatcher_bench.ppm") {
  using namespace pipeline_detail;
  validate(base);
  const QuantityScale scale = range_pass(handle, base);
  std::vector<BenchRow> rows;
  for (int ts : tile_sizes) {
    for (int w : worker_counts) {
      FrameConfig cfg = base;
      cfg.tile_size = ts;
      cfg.workers = w;
      validate(cfg);
      FrameRenderer renderer(cfg);
      BenchRow row{ts, w, {}, 0, false};
      row.total = timed([&] { row.stats = render_to_file(renderer, cfg, handle, scale, scratch_image); });
      rows.push_back(row);
    }
  }
  if (!rows.empty()) {
    auto best = std::min_element(rows.begin(), rows.end(),
                                 [](const BenchRow& a, const BenchRow& b) { return a.total < b.total; });
    best->best = true;
  }
  std::error_code ec;
  std::filesystem::remove(scratch_image, ec);
  return rows;
}

inline void write_bench_csv(std::ostream& out, std::span<const BenchRow> rows) {
  out << "tile_size,workers";
  for (const char* k : kKernelNames) out << ',' << k;
  out << ",total,best\n";
  char buf[64];
  for (const auto& r : rows) {
    out << r.tile_size << ',' << r.workers;
    for (double s : r.stats.seconds) {
      std::snprintf(buf, sizeof buf, "%.9f", s);
      out << ',' << buf;
    }
    std::snprintf(buf, sizeof buf, "%.9f", r.total);
    out << ',' << buf << ',' << (r.best ? 1 : 0) << '\n';
  }
}

}  // namespace splatcher
