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

namespace tailcheck {

namespace detail {
inline std::atomic<unsigned>& thread_override() {
  static std::atomic<unsigned> value{0};
  return value;
}
}  // namespace detail

// 0 restores the default: TAILCHECK_THREADS if set, else hardware concurrency.
inline void set_thread_count(unsigned threads) { detail::thread_override().store(threads); }

inline unsigned thread_count() {
  if (unsigned forced = detail::thread_override().load(); forced > 0) return forced;
  if (const char* env = std::getenv("TAILCHECK_THREADS")) {
    try {
      const long parsed = std::stol(env);
      if (parsed > 0) return static_cast<unsigned>(parsed);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs body(i) for i in [0, count). Work is handed out in index order through
// an atomic cursor; callers write results into per-index slots, so the output
// does not depend on scheduling. If several iterations throw, the exception
// from the smallest index is rethrown.
template <class Body>
void parallel_for(std::size_t count, Body&& body) {
  const std::size_t workers = std::min<std::size_t>(thread_count(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> cursor{0};
  std::mutex failure_mutex;
  std::exception_ptr failure;
  std::size_t failure_index = count;

  auto run = [&] {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (i < failure_index) {
          failure_index = i;
          failure = std::current_exception();
        }
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace tailcheck
