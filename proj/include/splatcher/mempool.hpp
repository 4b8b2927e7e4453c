#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <iterator>
#include <memory>
#include <new>
#include <span>
#include <type_traits>
#include <utility>
#include <vector>

#include "splatcher/error.hpp"
#include "splatcher/model.hpp"

namespace splatcher {

/// A sub-allocation handed out by a Pool or a SystemSource.
struct Block {
  enum class Origin : std::uint8_t { pool, fallback };

  std::byte* ptr = nullptr;
  std::size_t offset = 0;  // byte offset in the pool region; unused for fallback blocks
  std::size_t length = 0;  // bytes, a multiple of the alignment for pool blocks
  Origin origin = Origin::pool;

  explicit operator bool() const noexcept { return ptr != nullptr; }
};

/// Something PoolArray can grow into.
template <typename S>
concept BlockSource = requires(S& s, std::size_t n, Block b) {
  { s.allocate(n) } -> std::same_as<Block>;
  { s.free(b) } -> std::same_as<void>;
};

struct PoolStats {
  std::size_t allocs = 0;
  std::size_t frees = 0;
  std::size_t fallbacks = 0;  // allocations served by the system path
  std::size_t bad_frees = 0;  // double or foreign frees ignored in lenient mode
  std::size_t in_use = 0;     // pool bytes currently handed out
  std::size_t peak_usage = 0;

  PoolStats& operator+=(const PoolStats& o) {
    allocs += o.allocs;
    frees += o.frees;
    fallbacks += o.fallbacks;
    bad_frees += o.bad_frees;
    in_use += o.in_use;
    peak_usage += o.peak_usage;
    return *this;
  }
};

struct PoolOptions {
  /// Touch every page of the region at creation so the first frame does not
  /// pay the page faults.
  bool prefault = true;
  /// Throw InvariantError on double/foreign frees instead of counting them.
#ifdef NDEBUG
  bool strict = false;
#else
  bool strict = true;
#endif
  /// Worker that owns the pool; informational.
  int owner = 0;
};

/// Single-owner arena carved out of one aligned region. First-fit over an
/// offset-sorted free list; frees coalesce with both neighbours. Requests that
/// do not fit are served by an aligned system allocation instead.
///
/// Not thread safe: all calls must come from the owning worker.
class Pool {
 public:
  struct FreeRange {
    std::size_t offset = 0;
    std::size_t length = 0;
    friend bool operator==(const FreeRange&, const FreeRange&) = default;
  };

  Pool(std::size_t region_size, std::size_t alignment, PoolOptions options = {})
      : alignment_(alignment), options_(options) {
    if (alignment == 0 || (alignment & (alignment - 1)) != 0) {
      throw ConfigError("pool alignment must be a power of two");
    }
    if (region_size < alignment) throw ConfigError("pool region smaller than its alignment");
    region_size_ = detail::round_up(region_size, alignment);
    region_.reset(static_cast<std::byte*>(
        detail::aligned_allocate(region_size_, std::max(alignment, alignof(std::max_align_t)))));
    if (options_.prefault) std::memset(region_.get(), 0, region_size_);
    free_.reserve(64);
    free_.push_back({0, region_size_});
  }

  Pool(const Pool&) = delete;
  Pool& operator=(const Pool&) = delete;
  Pool(Pool&&) noexcept = default;
  Pool& operator=(Pool&&) noexcept = default;

  [[nodiscard]] Block allocate(std::size_t size) {
    if (size == 0) throw InvariantError("zero-byte pool allocation");
    const std::size_t need = detail::round_up(size, alignment_);
    ++stats_.allocs;
    for (auto it = free_.begin(); it != free_.end(); ++it) {
      if (it->length < need) continue;
      Block b{region_.get() + it->offset, it->offset, need, Block::Origin::pool};
      it->offset += need;
      it->length -= need;
      if (it->length == 0) free_.erase(it);
      stats_.in_use += need;
      stats_.peak_usage = std::max(stats_.peak_usage, stats_.in_use);
      return b;
    }
    ++stats_.fallbacks;
    auto* p = static_cast<std::byte*>(detail::aligned_allocate(need, alignment_));
    return Block{p, 0, need, Block::Origin::fallback};
  }

  void free(Block b) {
    if (!b) return;
    if (b.origin == Block::Origin::fallback) {
      std::free(b.ptr);
      ++stats_.frees;
      return;
    }
    if (!owns(b)) return reject("free of a block not owned by this pool");

    auto next = std::lower_bound(free_.begin(), free_.end(), b.offset,
                                 [](const FreeRange& r, std::size_t off) { return r.offset < off; });
    // Overlap with a neighbouring free range means the block is already free.
    if (next != free_.end() && next->offset < b.offset + b.length) return reject("double free");
    if (next != free_.begin()) {
      auto prev = std::prev(next);
      if (prev->offset + prev->length > b.offset) return reject("double free");
    }

    ++stats_.frees;
    stats_.in_use -= b.length;

    const bool join_prev = next != free_.begin() && std::prev(next)->offset + std::prev(next)->length == b.offset;
    const bool join_next = next != free_.end() && b.offset + b.length == next->offset;
    if (join_prev && join_next) {
      auto prev = std::prev(next);
      prev->length += b.length + next->length;
      free_.erase(next);
    } else if (join_prev) {
      std::prev(next)->length += b.length;
    } else if (join_next) {
      next->offset = b.offset;
      next->length += b.length;
    } else {
      free_.insert(next, FreeRange{b.offset, b.length});
    }
  }

  [[nodiscard]] bool owns(const Block& b) const noexcept {
    return b.origin == Block::Origin::pool && b.length > 0 && b.length % alignment_ == 0 &&
           b.offset % alignment_ == 0 && b.offset <= region_size_ && b.length <= region_size_ - b.offset &&
           b.ptr == region_.get() + b.offset;
  }

  [[nodiscard]] std::span<const FreeRange> free_list() const noexcept { return free_; }
  [[nodiscard]] const PoolStats& stats() const noexcept { return stats_; }
  [[nodiscard]] std::size_t alignment() const noexcept { return alignment_; }
  [[nodiscard]] std::size_t region_size() const noexcept { return region_size_; }
  [[nodiscard]] int owner() const noexcept { return options_.owner; }
  [[nodiscard]] const std::byte* base() const noexcept { return region_.get(); }

 private:
  void reject(const char* what) {
    if (options_.strict) throw InvariantError(what);
    ++stats_.bad_frees;
  }

  std::unique_ptr<std::byte, detail::AlignedFree> region_;
  std::size_t region_size_ = 0;
  std::size_t alignment_ = 0;
  PoolOptions options_;
  std::vector<FreeRange> free_;
  PoolStats stats_;
};

/// Plain aligned system allocation behind the BlockSource interface; every
/// request goes to the global allocator.
class SystemSource {
 public:
  explicit SystemSource(std::size_t alignment = kSimdAlignment) : alignment_(alignment) {}

  [[nodiscard]] Block allocate(std::size_t size) {
    const std::size_t need = detail::round_up(size, alignment_);
    ++stats_.allocs;
    ++stats_.fallbacks;
    return Block{static_cast<std::byte*>(detail::aligned_allocate(need, alignment_)), 0, need,
                 Block::Origin::fallback};
  }

  void free(Block b) {
    if (!b) return;
    std::free(b.ptr);
    ++stats_.frees;
  }

  [[nodiscard]] const PoolStats& stats() const noexcept { return stats_; }

 private:
  std::size_t alignment_;
  PoolStats stats_;
};

static_assert(BlockSource<Pool>);
static_assert(BlockSource<SystemSource>);

/// Growable array of trivially copyable elements whose storage comes from a
/// BlockSource. Capacity doubles when full; the new block comes from the same
/// source and the old one is returned to it.
template <typename T, BlockSource Source = Pool>
  requires std::is_trivially_copyable_v<T>
class PoolArray {
 public:
  static constexpr std::size_t kFirstCapacity = 8;

  explicit PoolArray(Source& source, std::size_t initial_capacity = 0) : source_(&source) {
    if (initial_capacity > 0) reallocate(initial_capacity);
  }

  PoolArray(const PoolArray&) = delete;
  PoolArray& operator=(const PoolArray&) = delete;

  PoolArray(PoolArray&& o) noexcept
      : source_(o.source_), block_(std::exchange(o.block_, Block{})), size_(std::exchange(o.size_, 0)),
        capacity_(std::exchange(o.capacity_, 0)) {}

  PoolArray& operator=(PoolArray&& o) noexcept {
    if (this != &o) {
      release();
      source_ = o.source_;
      block_ = std::exchange(o.block_, Block{});
      size_ = std::exchange(o.size_, 0);
      capacity_ = std::exchange(o.capacity_, 0);
    }
    return *this;
  }

  ~PoolArray() { release(); }

  void push_back(const T& v) {
    if (size_ == capacity_) reallocate(capacity_ == 0 ? kFirstCapacity : capacity_ * 2);
    data()[size_++] = v;
  }

  void reserve(std::size_t n) {
    if (n > capacity_) reallocate(n);
  }

  /// Drops the elements, keeps the storage.
  void clear() noexcept { size_ = 0; }

  /// Drops the elements and returns the storage to the source.
  void release() noexcept {
    if (block_) source_->free(block_);
    block_ = Block{};
    size_ = capacity_ = 0;
  }

  [[nodiscard]] T* data() noexcept { return reinterpret_cast<T*>(block_.ptr); }
  [[nodiscard]] const T* data() const noexcept { return reinterpret_cast<const T*>(block_.ptr); }
  [[nodiscard]] std::size_t size() const noexcept { return size_; }
  [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
  [[nodiscard]] bool empty() const noexcept { return size_ == 0; }
  [[nodiscard]] const Block& block() const noexcept { return block_; }
  [[nodiscard]] Source& source() const noexcept { return *source_; }

  T& operator[](std::size_t i) noexcept { return data()[i]; }
  const T& operator[](std::size_t i) const noexcept { return data()[i]; }

  T* begin() noexcept { return data(); }
  T* end() noexcept { return data() + size_; }
  const T* begin() const noexcept { return data(); }
  const T* end() const noexcept { return data() + size_; }

  [[nodiscard]] std::span<const T> view() const noexcept { return {data(), size_}; }

 private:
  void reallocate(std::size_t new_capacity) {
    Block fresh = source_->allocate(new_capacity * sizeof(T));
    if (size_ > 0) std::memcpy(fresh.ptr, block_.ptr, size_ * sizeof(T));
    if (block_) source_->free(block_);
    block_ = fresh;
    capacity_ = new_capacity;
  }

  Source* source_;
  Block block_{};
  std::size_t size_ = 0;
  std::size_t capacity_ = 0;
};

}  // namespace splatcher
