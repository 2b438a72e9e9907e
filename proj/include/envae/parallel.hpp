#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace envae {

/// Worker count from ENVAE_THREADS (default 1). Read once per process.
inline std::size_t worker_threads() {
  static const std::size_t n = [] {
    const char* env = std::getenv("ENVAE_THREADS");
    if (!env) return std::size_t{1};
    try {
      const long v = std::stol(env);
      return v > 1 ? static_cast<std::size_t>(v) : std::size_t{1};
    } catch (...) {
      return std::size_t{1};
    }
  }();
  return n;
}

/// Run body(i) for i in [0, n), split into contiguous chunks across
/// worker_threads(). Each index is handled by exactly one worker, so bodies
/// that write only to slots owned by their index give bitwise-identical
/// results at any thread count.
template <class Body>
void parallel_for(std::size_t n, Body body, std::size_t min_chunk = 4) {
  const std::size_t workers = std::min(worker_threads(), std::max<std::size_t>(1, n / min_chunk));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (std::size_t i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace envae
