// Deterministic parallel loop: the index range is split into contiguous
// chunks and each worker writes only to its own indices, so results do not
// depend on the thread count.
#pragma once

#include <cstddef>
#include <cstdlib>
#include <thread>
#include <vector>

namespace bodytrack {

inline int worker_count() {
  if (const char* env = std::getenv("BODYTRACK_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

template <typename Fn>
void parallel_for(std::size_t begin, std::size_t end, Fn&& fn) {
  const std::size_t count = end > begin ? end - begin : 0;
  const int workers = worker_count();
  if (count == 0) return;
  if (workers <= 1 || count < 2048) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
    return;
  }
  const std::size_t chunk = (count + workers - 1) / workers;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    const std::size_t lo = begin + chunk * w;
    if (lo >= end) break;
    const std::size_t hi = std::min(end, lo + chunk);
    threads.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : threads) t.join();
}

}  // namespace bodytrack
