#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>

#include "splatcher/error.hpp"
#include "splatcher/model.hpp"

namespace splatcher {

struct FieldRange {
  float min = 0;
  float max = 0;
  friend bool operator==(const FieldRange&, const FieldRange&) = default;
};

/// Everything the render pass needs to map raw q onto [0,1].
struct QuantityScale {
  FieldRange range;       // after the optional log transform
  bool use_log = false;
  float log_floor = 0;    // replacement for log10 of non-positive q
};

/// Folds the q values of `chunk` into `running`. Empty chunks return `running`
/// unchanged. A non-finite q raises IoError(bad_record) naming its index.
[[nodiscard]] inline std::optional<FieldRange> compute_range(const ParticleChunk& chunk,
                                                             std::optional<FieldRange> running,
                                                             std::size_t index_base = 0) {
  const auto q = chunk.q();
  if (q.empty()) return running;
  float lo = running ? running->min : std::numeric_limits<float>::infinity();
  float hi = running ? running->max : -std::numeric_limits<float>::infinity();
  for (std::size_t i = 0; i < q.size(); ++i) {
    const float v = q[i];
    if (!std::isfinite(v)) {
      throw IoError(IoErrc::bad_record, "non-finite q at particle " + std::to_string(index_base + i));
    }
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return FieldRange{lo, hi};
}

/// Smallest strictly positive q in the chunk folded into `running` (+inf if none).
[[nodiscard]] inline float min_positive(const ParticleChunk& chunk, float running) {
  for (float v : chunk.q()) {
    if (v > 0.0f) running = std::min(running, v);
  }
  return running;
}

/// q <- log10(q) when `use_log`; non-positive q becomes `floor_value` and is
/// counted. Returns the number of clamped particles.
inline std::size_t apply_transform(ParticleChunk& chunk, bool use_log, float floor_value, std::size_t begin,
                                   std::size_t end) {
  if (!use_log) return 0;
  std::size_t clamped = 0;
  for (float& v : chunk.q().subspan(begin, end - begin)) {
    if (v > 0.0f) {
      v = std::log10(v);
    } else {
      v = floor_value;
      ++clamped;
    }
  }
  return clamped;
}

inline std::size_t apply_transform(ParticleChunk& chunk, bool use_log, float floor_value) {
  return apply_transform(chunk, use_log, floor_value, 0, chunk.size());
}

/// q <- clamp((q - min) / (max - min), 0, 1); a degenerate range maps to 0.
inline void normalize(ParticleChunk& chunk, FieldRange range, std::size_t begin, std::size_t end) {
  auto q = chunk.q().subspan(begin, end - begin);
  if (!(range.max > range.min)) {
    std::fill(q.begin(), q.end(), 0.0f);
    return;
  }
  const float span = range.max - range.min;
  for (float& v : q) v = std::clamp((v - range.min) / span, 0.0f, 1.0f);
}

inline void normalize(ParticleChunk& chunk, FieldRange range) { normalize(chunk, range, 0, chunk.size()); }

/// Applies the transform and normalisation of `scale`; returns clamped count.
inline std::size_t prepare_quantity(ParticleChunk& chunk, const QuantityScale& scale, std::size_t begin,
                                    std::size_t end) {
  const std::size_t clamped = apply_transform(chunk, scale.use_log, scale.log_floor, begin, end);
  normalize(chunk, scale.range, begin, end);
  return clamped;
}

}  // namespace splatcher
