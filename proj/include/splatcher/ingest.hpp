#pragma once

// File input and output: particle datasets, colour maps, PPM images.
//
// Particle dataset layout (little-endian):
//   "SPLT" | u32 version=1 | u64 count | u32 ptype_count
//   count x { f32 x, y, z, r, q, reserved, reserved | u32 ptype }

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "splatcher/error.hpp"
#include "splatcher/model.hpp"

namespace splatcher {

inline constexpr std::array<char, 4> kDatasetMagic{'S', 'P', 'L', 'T'};
inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::size_t kDatasetHeaderBytes = 20;
inline constexpr std::size_t kDatasetRecordBytes = 32;

/// One on-disk particle record.
struct ParticleRecord {
  float x = 0, y = 0, z = 0;
  float r = 0;
  float q = 0;
  std::uint32_t ptype = 0;

  friend bool operator==(const ParticleRecord&, const ParticleRecord&) = default;
};

namespace detail {

template <typename T>
T byteswap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    auto bytes = std::bit_cast<std::array<std::byte, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
}

template <typename T>
T load_le(const std::byte* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return byteswap_if_big(v);
}

template <typename T>
void store_le(std::byte* p, T v) {
  v = byteswap_if_big(v);
  std::memcpy(p, &v, sizeof(T));
}

inline ParticleRecord decode_record(const std::byte* p) {
  ParticleRecord rec;
  rec.x = load_le<float>(p + 0);
  rec.y = load_le<float>(p + 4);
  rec.z = load_le<float>(p + 8);
  rec.r = load_le<float>(p + 12);
  rec.q = load_le<float>(p + 16);
  rec.ptype = load_le<std::uint32_t>(p + 28);
  return rec;
}

inline void encode_record(std::byte* p, const ParticleRecord& rec) {
  store_le(p + 0, rec.x);
  store_le(p + 4, rec.y);
  store_le(p + 8, rec.z);
  store_le(p + 12, rec.r);
  store_le(p + 16, rec.q);
  store_le(p + 20, 0.0f);
  store_le(p + 24, 0.0f);
  store_le(p + 28, rec.ptype);
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

/// Strips a trailing `#` comment and surrounding whitespace.
inline std::string strip_comment(std::string_view line) {
  const auto hash = line.find('#');
  return trim(line.substr(0, hash));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Datasets.

/// Writes a complete dataset. Throws IoError on failure.
inline void write_dataset(const std::filesystem::path& path, std::span<const ParticleRecord> records,
                          std::uint32_t ptype_count) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoErrc::write_failure, path.string());
  std::array<std::byte, kDatasetHeaderBytes> header{};
  std::memcpy(header.data(), kDatasetMagic.data(), 4);
  detail::store_le(header.data() + 4, kDatasetVersion);
  detail::store_le(header.data() + 8, static_cast<std::uint64_t>(records.size()));
  detail::store_le(header.data() + 16, ptype_count);
  out.write(reinterpret_cast<const char*>(header.data()), header.size());

  constexpr std::size_t kBatch = 4096;
  std::vector<std::byte> buf(kBatch * kDatasetRecordBytes);
  for (std::size_t i = 0; i < records.size(); i += kBatch) {
    const std::size_t n = std::min(kBatch, records.size() - i);
    for (std::size_t k = 0; k < n; ++k) detail::encode_record(buf.data() + k * kDatasetRecordBytes, records[i + k]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(n * kDatasetRecordBytes));
  }
  if (!out) throw IoError(IoErrc::write_failure, path.string());
}

/// Sequential reader over one dataset file. Single owner; not thread safe.
class DatasetHandle {
 public:
  [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }
  [[nodiscard]] std::uint64_t total_count() const noexcept { return total_; }
  [[nodiscard]] std::uint64_t cursor() const noexcept { return cursor_; }
  [[nodiscard]] std::uint32_t ptype_count() const noexcept { return ptype_count_; }
  [[nodiscard]] std::uint64_t remaining() const noexcept { return total_ - cursor_; }

  void rewind() noexcept { cursor_ = 0; }

  /// Fills `dest` with up to dest.capacity() particles and advances the
  /// cursor. Returns 0 at end of data. Particles come back active iff r > 0,
  /// with zero colour. On failure the cursor is left where it was.
  std::size_t read_chunk(ParticleChunk& dest) {
    if (dest.capacity() == 0) throw InvariantError("read into a chunk without capacity");
    const std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(dest.capacity(), remaining()));
    dest.clear();
    if (n == 0) return 0;

    staging_.resize(n * kDatasetRecordBytes);
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(kDatasetHeaderBytes + cursor_ * kDatasetRecordBytes));
    in_.read(reinterpret_cast<char*>(staging_.data()), static_cast<std::streamsize>(staging_.size()));
    if (!in_ || static_cast<std::size_t>(in_.gcount()) != staging_.size()) {
      throw IoError(IoErrc::read_failure, path_.string() + " at particle " + std::to_string(cursor_));
    }

    dest.resize(n);
    auto x = dest.x(), y = dest.y(), z = dest.z(), r = dest.r(), q = dest.q();
    auto red = dest.red(), green = dest.green(), blue = dest.blue();
    auto ptype = dest.ptype();
    auto active = dest.active();
    for (std::size_t i = 0; i < n; ++i) {
      const ParticleRecord rec = detail::decode_record(staging_.data() + i * kDatasetRecordBytes);
      if (rec.ptype >= ptype_count_) {
        dest.clear();
        throw IoError(IoErrc::bad_record, path_.string() + ": particle " + std::to_string(cursor_ + i) +
                                              " has ptype " + std::to_string(rec.ptype) + " >= ptype count " +
                                              std::to_string(ptype_count_));
      }
      x[i] = rec.x;
      y[i] = rec.y;
      z[i] = rec.z;
      r[i] = rec.r;
      q[i] = rec.q;
      red[i] = green[i] = blue[i] = 0.0f;
      ptype[i] = rec.ptype;
      active[i] = rec.r > 0.0f ? 1 : 0;
    }
    cursor_ += n;
    return n;
  }

 private:
  friend DatasetHandle open_dataset(const std::filesystem::path& path);

  std::filesystem::path path_;
  std::ifstream in_;
  std::uint64_t total_ = 0;
  std::uint64_t cursor_ = 0;
  std::uint32_t ptype_count_ = 0;
  std::vector<std::byte> staging_;
};

/// Opens a dataset and validates its header and payload length.
inline DatasetHandle open_dataset(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) throw IoError(IoErrc::missing_file, path.string());
  const auto file_size = std::filesystem::file_size(path, ec);
  if (ec) throw IoError(IoErrc::read_failure, path.string());

  DatasetHandle h;
  h.path_ = path;
  h.in_.open(path, std::ios::binary);
  if (!h.in_) throw IoError(IoErrc::missing_file, path.string());

  std::array<std::byte, kDatasetHeaderBytes> header{};
  h.in_.read(reinterpret_cast<char*>(header.data()), header.size());
  const auto got = static_cast<std::size_t>(h.in_.gcount());
  if (got >= 4 && std::memcmp(header.data(), kDatasetMagic.data(), 4) != 0) {
    throw IoError(IoErrc::bad_magic, path.string());
  }
  if (got < 8) throw IoError(IoErrc::truncated_header, path.string());
  const auto version = detail::load_le<std::uint32_t>(header.data() + 4);
  if (version != kDatasetVersion) {
    throw IoError(IoErrc::version_mismatch, path.string() + ": version " + std::to_string(version));
  }
  if (got < kDatasetHeaderBytes) throw IoError(IoErrc::truncated_header, path.string());

  h.total_ = detail::load_le<std::uint64_t>(header.data() + 8);
  h.ptype_count_ = detail::load_le<std::uint32_t>(header.data() + 16);
  const std::uint64_t payload = file_size - kDatasetHeaderBytes;
  if (h.total_ > payload / kDatasetRecordBytes) {
    throw IoError(IoErrc::truncated_payload, path.string() + ": header claims " + std::to_string(h.total_) +
                                                 " particles, payload holds " +
                                                 std::to_string(payload / kDatasetRecordBytes));
  }
  return h;
}

// ---------------------------------------------------------------------------
// Colour maps: text lines `t r g b`, `#` comments.

inline ColorMap parse_colormap(std::istream& in, const std::string& name) {
  std::vector<ColorStop> stops;
  std::vector<std::size_t> lines;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = detail::strip_comment(raw);
    if (line.empty()) continue;
    std::istringstream ss(line);
    ColorStop s;
    std::string extra;
    if (!(ss >> s.t >> s.r >> s.g >> s.b) || (ss >> extra)) {
      throw ParseError(name, lineno, "expected four numbers `t r g b`");
    }
    for (float v : {s.t, s.r, s.g, s.b}) {
      if (!(v >= 0.0f && v <= 1.0f)) throw ParseError(name, lineno, "value outside [0,1]");
    }
    if (!stops.empty() && !(stops.back().t < s.t)) {
      throw ParseError(name, lineno, "positions must be strictly ascending");
    }
    stops.push_back(s);
    lines.push_back(lineno);
  }
  if (stops.size() < 2) throw ParseError(name, lineno, "colour map needs at least two entries");
  stops.front().t = 0.0f;
  stops.back().t = 1.0f;
  if (!(stops[0].t < stops[1].t) || !(stops[stops.size() - 2].t < stops.back().t)) {
    throw ParseError(name, lines.back(), "positions must be strictly ascending");
  }
  return ColorMap(std::move(stops));
}

inline ColorMap load_colormap(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(IoErrc::missing_file, path.string());
  return parse_colormap(in, path.string());
}

inline void save_colormap(const std::filesystem::path& path, const ColorMap& map) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(IoErrc::write_failure, path.string());
  out.precision(9);
  for (const auto& s : map.stops()) out << s.t << ' ' << s.r << ' ' << s.g << ' ' << s.b << '\n';
  if (!out) throw IoError(IoErrc::write_failure, path.string());
}

// ---------------------------------------------------------------------------
// PPM (P6, maxval 255).

inline void write_ppm(const std::filesystem::path& path, const Rgb8Image& img) {
  const std::size_t expected = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height) * 3;
  if (img.width < 1 || img.height < 1 || img.data.size() != expected) {
    throw InvariantError("PPM buffer does not match its dimensions");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoErrc::write_failure, path.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (!out) throw IoError(IoErrc::write_failure, path.string());
}

/// Reads a P6 file with maxval 255 as produced by write_ppm.
inline Rgb8Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoErrc::missing_file, path.string());
  std::string magic;
  int maxval = 0;
  Rgb8Image img;
  in >> magic >> img.width >> img.height >> maxval;
  if (magic != "P6") throw IoError(IoErrc::bad_magic, path.string());
  if (!in || maxval != 255 || img.width < 1 || img.height < 1) {
    throw IoError(IoErrc::truncated_header, path.string());
  }
  in.get();
  img.data.resize(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height) * 3);
  in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.data.size()) {
    throw IoError(IoErrc::truncated_payload, path.string());
  }
  return img;
}

}  // namespace splatcher
