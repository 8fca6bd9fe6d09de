#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace branchflow {

/// Worker count: hardware concurrency capped by the BF_THREADS env var.
inline int thread_count() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n <= 0) n = 1;
  if (const char* env = std::getenv("BF_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

/**
 * Static-chunked parallel loop over [0, n). The body must only write to
 * per-index slots; determinism of the overall result is then independent of
 * the worker count.
 */
inline void parallel_for(size_t n, const std::function<void(size_t)>& body) {
  const int workers = std::min<size_t>(thread_count(), n);
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (size_t i = static_cast<size_t>(w); i < n; i += workers) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace branchflow
