#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace flowscape {

// Runs fn(i) for i in [0, n) on `threads` workers. Work items are pure and
// write to disjoint slots, so the schedule cannot affect results; threads=1
// (or n <= 1) degrades to a plain loop.
inline void parallel_for(size_t n, const std::function<void(size_t)>& fn,
                         unsigned threads = 0) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  if (threads <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
  };
  std::vector<std::thread> pool;
  const unsigned spawn = static_cast<unsigned>(
      std::min<size_t>(threads, n));
  pool.reserve(spawn - 1);
  for (unsigned t = 0; t + 1 < spawn; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

}  // namespace flowscape
