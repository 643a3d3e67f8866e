#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace llgs {

// Static range partition across `threads` workers. Work items must be
// independent; callers that need deterministic reductions merge per-range
// results in index order afterwards.
inline void parallel_for(size_t n, int threads,
                         const std::function<void(size_t, size_t)>& body) {
  if (n == 0) return;
  if (threads <= 1 || n == 1) {
    body(0, n);
    return;
  }
  size_t workers = std::min<size_t>(static_cast<size_t>(threads), n);
  size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (size_t w = 0; w < workers; ++w) {
    size_t begin = w * chunk;
    size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end] { body(begin, end); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace llgs
