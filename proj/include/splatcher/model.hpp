#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "splatcher/error.hpp"

#ifndef SPLATCHER_SIMD_ALIGNMENT
#define SPLATCHER_SIMD_ALIGNMENT 64
#endif

namespace splatcher {

/// Byte alignment of every particle field array.
inline constexpr std::size_t kSimdAlignment = SPLATCHER_SIMD_ALIGNMENT;
static_assert((kSimdAlignment & (kSimdAlignment - 1)) == 0, "alignment must be a power of two");

// ---------------------------------------------------------------------------
// Small vector type for camera math (double precision on the host side).

struct Vec3 {
  double x = 0, y = 0, z = 0;

  friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend constexpr Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
  friend constexpr bool operator==(Vec3, Vec3) = default;
};

constexpr double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double length(Vec3 a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalize(Vec3 a) { return a * (1.0 / length(a)); }

// ---------------------------------------------------------------------------
// Aligned heap storage.

namespace detail {

struct AlignedFree {
  void operator()(void* p) const noexcept { std::free(p); }
};

inline std::size_t round_up(std::size_t n, std::size_t align) { return (n + align - 1) / align * align; }

/// std::aligned_alloc wrapper; throws std::bad_alloc instead of returning null.
inline void* aligned_allocate(std::size_t bytes, std::size_t align) {
  void* p = std::aligned_alloc(align, round_up(std::max<std::size_t>(bytes, 1), align));
  if (p == nullptr) throw std::bad_alloc();
  return p;
}

}  // namespace detail

template <typename T>
class AlignedArray {
 public:
  AlignedArray() = default;
  explicit AlignedArray(std::size_t n)
      : data_(static_cast<T*>(detail::aligned_allocate(n * sizeof(T), kSimdAlignment))), size_(n) {}

  [[nodiscard]] T* data() noexcept { return data_.get(); }
  [[nodiscard]] const T* data() const noexcept { return data_.get(); }
  [[nodiscard]] std::size_t size() const noexcept { return size_; }

 private:
  std::unique_ptr<T, detail::AlignedFree> data_;
  std::size_t size_ = 0;
};

// ---------------------------------------------------------------------------
// Particles.

/// One particle, array-of-structures view. Position and radius are world
/// units until transformed, then image-space pixels.
struct Particle {
  float x = 0, y = 0, z = 0;
  float r = 0;
  float q = 0;
  float red = 0, green = 0, blue = 0;
  std::uint32_t ptype = 0;
  bool active = false;

  friend bool operator==(const Particle&, const Particle&) = default;
};

/// Bounded structure-of-arrays batch of particles. Every field array is
/// aligned to kSimdAlignment. Contents beyond size() are unspecified.
class ParticleChunk {
 public:
  ParticleChunk() = default;

  /// Throws ConfigError when capacity is zero.
  static ParticleChunk create(std::size_t capacity) {
    if (capacity == 0) throw ConfigError("chunk capacity must be positive");
    ParticleChunk c;
    c.capacity_ = capacity;
    for (auto& f : c.floats_) f = AlignedArray<float>(capacity);
    c.ptype_ = AlignedArray<std::uint32_t>(capacity);
    c.active_ = AlignedArray<std::uint8_t>(capacity);
    return c;
  }

  [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
  [[nodiscard]] std::size_t size() const noexcept { return count_; }
  [[nodiscard]] bool empty() const noexcept { return count_ == 0; }

  void resize(std::size_t n) {
    if (n > capacity_) throw InvariantError("chunk resize beyond capacity");
    count_ = n;
  }
  void clear() noexcept { count_ = 0; }

  enum Field : std::size_t { kX, kY, kZ, kR, kQ, kRed, kGreen, kBlue, kFloatFields };

  [[nodiscard]] std::span<float> field(Field f) noexcept { return {floats_[f].data(), count_}; }
  [[nodiscard]] std::span<const float> field(Field f) const noexcept { return {floats_[f].data(), count_}; }

  std::span<float> x() noexcept { return field(kX); }
  std::span<float> y() noexcept { return field(kY); }
  std::span<float> z() noexcept { return field(kZ); }
  std::span<float> r() noexcept { return field(kR); }
  std::span<float> q() noexcept { return field(kQ); }
  std::span<float> red() noexcept { return field(kRed); }
  std::span<float> green() noexcept { return field(kGreen); }
  std::span<float> blue() noexcept { return field(kBlue); }
  std::span<std::uint32_t> ptype() noexcept { return {ptype_.data(), count_}; }
  std::span<std::uint8_t> active() noexcept { return {active_.data(), count_}; }

  std::span<const float> x() const noexcept { return field(kX); }
  std::span<const float> y() const noexcept { return field(kY); }
  std::span<const float> z() const noexcept { return field(kZ); }
  std::span<const float> r() const noexcept { return field(kR); }
  std::span<const float> q() const noexcept { return field(kQ); }
  std::span<const float> red() const noexcept { return field(kRed); }
  std::span<const float> green() const noexcept { return field(kGreen); }
  std::span<const float> blue() const noexcept { return field(kBlue); }
  std::span<const std::uint32_t> ptype() const noexcept { return {ptype_.data(), count_}; }
  std::span<const std::uint8_t> active() const noexcept { return {active_.data(), count_}; }

  /// Raw base addresses of every field array (used by alignment checks).
  [[nodiscard]] std::array<const void*, kFloatFields + 2> field_addresses() const noexcept {
    std::array<const void*, kFloatFields + 2> out{};
    for (std::size_t i = 0; i < kFloatFields; ++i) out[i] = floats_[i].data();
    out[kFloatFields] = ptype_.data();
    out[kFloatFields + 1] = active_.data();
    return out;
  }

  [[nodiscard]] Particle get(std::size_t i) const {
    return Particle{floats_[kX].data()[i],     floats_[kY].data()[i],    floats_[kZ].data()[i],
                    floats_[kR].data()[i],     floats_[kQ].data()[i],    floats_[kRed].data()[i],
                    floats_[kGreen].data()[i], floats_[kBlue].data()[i], ptype_.data()[i],
                    active_.data()[i] != 0};
  }

  void set(std::size_t i, const Particle& p) {
    floats_[kX].data()[i] = p.x;
    floats_[kY].data()[i] = p.y;
    floats_[kZ].data()[i] = p.z;
    floats_[kR].data()[i] = p.r;
    floats_[kQ].data()[i] = p.q;
    floats_[kRed].data()[i] = p.red;
    floats_[kGreen].data()[i] = p.green;
    floats_[kBlue].data()[i] = p.blue;
    ptype_.data()[i] = p.ptype;
    active_.data()[i] = p.active ? 1 : 0;
  }

  void push_back(const Particle& p) {
    if (count_ == capacity_) throw InvariantError("chunk is full");
    set(count_++, p);
  }

 private:
  std::array<AlignedArray<float>, kFloatFields> floats_;
  AlignedArray<std::uint32_t> ptype_;
  AlignedArray<std::uint8_t> active_;
  std::size_t capacity_ = 0;
  std::size_t count_ = 0;
};

// ---------------------------------------------------------------------------
// Images.

struct Rgb {
  float r = 0, g = 0, b = 0;
  friend bool operator==(Rgb, Rgb) = default;
};

/// Linear-light float image, row-major, additive only.
class Image {
 public:
  Image() = default;
  Image(int width, int height) : width_(width), height_(height) {
    if (width < 1 || height < 1) throw ConfigError("image dimensions must be positive");
    pixels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), Rgb{});
  }

  [[nodiscard]] int width() const noexcept { return width_; }
  [[nodiscard]] int height() const noexcept { return height_; }

  Rgb& at(int x, int y) noexcept { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  [[nodiscard]] const Rgb& at(int x, int y) const noexcept {
    return pixels_[static_cast<std::size_t>(y) * width_ + x];
  }
  Rgb* row(int y) noexcept { return pixels_.data() + static_cast<std::size_t>(y) * width_; }

  [[nodiscard]] std::span<Rgb> pixels() noexcept { return pixels_; }
  [[nodiscard]] std::span<const Rgb> pixels() const noexcept { return pixels_; }

  void fill(Rgb v) { std::fill(pixels_.begin(), pixels_.end(), v); }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<Rgb> pixels_;
};

/// 8-bit RGB buffer, row-major, three bytes per pixel.
struct Rgb8Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  friend bool operator==(const Rgb8Image&, const Rgb8Image&) = default;
};

// ---------------------------------------------------------------------------
// Camera.

struct Camera {
  Vec3 position{0, 0, -3};
  Vec3 lookat{0, 0, 0};
  Vec3 sky{0, 1, 0};
  double fov_deg = 45.0;

  /// Throws ConfigError if position == lookat or sky is parallel to the view axis.
  void validate() const {
    const Vec3 view = lookat - position;
    const double len = length(view);
    if (!(len > 0.0) || !std::isfinite(len)) throw ConfigError("camera position coincides with lookat");
    const double sky_len = length(sky);
    if (!(sky_len > 0.0)) throw ConfigError("camera sky vector is zero");
    if (length(cross(view, sky)) <= 1e-9 * len * sky_len) {
      throw ConfigError("camera sky vector is parallel to the view direction");
    }
    if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw ConfigError("fov must lie in (0, 180) degrees");
  }
};

// ---------------------------------------------------------------------------
// Colour maps.

struct ColorStop {
  float t = 0;
  float r = 0, g = 0, b = 0;
  friend bool operator==(const ColorStop&, const ColorStop&) = default;
};

/// Piecewise-linear map from [0,1] to RGB. Stops are strictly ascending in t,
/// first at 0, last at 1.
class ColorMap {
 public:
  ColorMap() : ColorMap(std::vector<ColorStop>{{0, 0, 0, 0}, {1, 1, 1, 1}}) {}

  explicit ColorMap(std::vector<ColorStop> stops) : stops_(std::move(stops)) {
    if (stops_.size() < 2) throw ConfigError("colour map needs at least two entries");
    if (stops_.front().t != 0.0f || stops_.back().t != 1.0f) {
      throw ConfigError("colour map must start at t=0 and end at t=1");
    }
    for (std::size_t i = 1; i < stops_.size(); ++i) {
      if (!(stops_[i - 1].t < stops_[i].t)) throw ConfigError("colour map positions must be strictly ascending");
    }
  }

  [[nodiscard]] std::span<const ColorStop> stops() const noexcept { return stops_; }
  [[nodiscard]] std::size_t size() const noexcept { return stops_.size(); }

  /// Index of the segment [stops[k], stops[k+1]] holding q, via binary search.
  [[nodiscard]] std::size_t segment(float q) const noexcept {
    auto it = std::upper_bound(stops_.begin(), stops_.end(), q,
                               [](float v, const ColorStop& s) { return v < s.t; });
    std::size_t k = it == stops_.begin() ? 0 : static_cast<std::size_t>(it - stops_.begin()) - 1;
    return std::min(k, stops_.size() - 2);
  }

  /// Piecewise-linear lookup; q is clamped to [0,1]. Stop positions return
  /// their colour exactly.
  [[nodiscard]] Rgb lookup(float q) const noexcept { return interpolate(segment(q), q); }

  [[nodiscard]] Rgb interpolate(std::size_t k, float q) const noexcept {
    const ColorStop& a = stops_[k];
    const ColorStop& b = stops_[k + 1];
    float f = (q - a.t) / (b.t - a.t);
    f = std::clamp(f, 0.0f, 1.0f);
    const float g = 1.0f - f;
    return {a.r * g + b.r * f, a.g * g + b.g * f, a.b * g + b.b * f};
  }

  friend bool operator==(const ColorMap&, const ColorMap&) = default;

 private:
  std::vector<ColorStop> stops_;
};

}  // namespace splatcher
