#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace texsyn {

namespace detail {
inline std::atomic<std::size_t>& thread_count_override() {
  static std::atomic<std::size_t> value{0};
  return value;
}
}  // namespace detail

/// Environment variable consulted for the worker count.
inline constexpr const char* kThreadsEnv = "TEXSYN_THREADS";

/// Number of worker threads used by data-parallel kernels. An explicit
/// set_num_threads() wins, then TEXSYN_THREADS, then the hardware count.
inline std::size_t num_threads() {
  if (auto n = detail::thread_count_override().load(); n > 0) return n;
  if (const char* env = std::getenv(kThreadsEnv)) {
    try {
      long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Pass 0 to fall back to the environment.
inline void set_num_threads(std::size_t n) { detail::thread_count_override().store(n); }

/// Runs fn(i) for every i in [0, count). Each index is handled by exactly one
/// worker, so kernels that give every index a disjoint output and a fixed
/// internal reduction order produce identical results at any thread count.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const std::size_t workers = std::min(num_threads(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] {
      for (std::size_t i = begin; i < end; ++i) fn(i);
    });
  }
  for (std::size_t i = 0; i < std::min(count, chunk); ++i) fn(i);
}

}  // namespace texsyn
