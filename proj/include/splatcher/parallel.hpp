#pragma once

#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

namespace splatcher {

/// Runs fn(w) for w in [0, workers) on `workers` threads (w = 0 on the
/// caller) and joins them. The first exception thrown is rethrown.
template <typename Fn>
void run_workers(int workers, Fn&& fn) {
  if (workers <= 1) {
    fn(0);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  auto guarded = [&](int w) {
    try {
      fn(w);
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  };
  {
    std::vector<std::jthread> threads;
    threads.reserve(static_cast<std::size_t>(workers - 1));
    for (int w = 1; w < workers; ++w) threads.emplace_back(guarded, w);
    guarded(0);
  }
  if (error) std::rethrow_exception(error);
}

/// Contiguous share of [0, n) owned by worker w of `workers`.
[[nodiscard]] inline std::pair<std::size_t, std::size_t> worker_range(std::size_t n, int w, int workers) {
  const auto W = static_cast<std::size_t>(workers);
  const auto k = static_cast<std::size_t>(w);
  return {n * k / W, n * (k + 1) / W};
}

}  // namespace splatcher
