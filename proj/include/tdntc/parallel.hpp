#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace tdntc {

// Number of worker threads the library may use. TDNTC_THREADS caps it;
// otherwise the hardware concurrency is used.
inline std::size_t thread_budget() {
  static const std::size_t budget = [] {
    std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("TDNTC_THREADS")) {
      try {
        long v = std::stol(env);
        if (v >= 1) return std::min<std::size_t>(hw, static_cast<std::size_t>(v));
      } catch (...) {
      }
    }
    return hw;
  }();
  return budget;
}

// Runs fn(begin, end) over disjoint contiguous chunks of [0, n). Chunks are
// independent, so results never depend on the thread count as long as fn
// writes only to its own range.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t min_chunk, Fn&& fn) {
  std::size_t workers = std::min(thread_budget(), n / std::max<std::size_t>(1, min_chunk));
  if (workers <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 1; w < workers; ++w) {
    std::size_t begin = w * chunk;
    std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  fn(std::size_t{0}, std::min(n, chunk));
  for (auto& t : pool) t.join();
}

}  // namespace tdntc
