#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace entlens::parallel {

namespace detail {
inline std::atomic<std::size_t>& worker_override() {
  static std::atomic<std::size_t> value{0};
  return value;
}
}  // namespace detail

/// Overrides the worker cap for this process (0 restores the default).
inline void set_max_workers(std::size_t n) { detail::worker_override().store(n); }

/// Worker cap: explicit override, else ENTL_THREADS, else hardware concurrency.
inline std::size_t max_workers() {
  if (auto n = detail::worker_override().load(); n > 0) return n;
  if (const char* env = std::getenv("ENTL_THREADS"); env != nullptr && *env != '\0') {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n). Work items must write only to their own slot;
/// the caller assembles results in index order, so output never depends on
/// the worker count. The first exception (lowest index) is rethrown.
template <typename Fn>
void for_each_index(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min(max_workers(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::size_t error_index = n;
  std::exception_ptr error;
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace entlens::parallel
