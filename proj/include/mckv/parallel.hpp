#pragma once

#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace mckv {

// Static block partition over [0, n); results must be written to disjoint
// slots so the outcome is independent of the worker count.  The first
// exception thrown by a worker is rethrown on the calling thread.
inline void parallel_for(int n, int workers,
                         const std::function<void(int)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int w = std::min(workers, n);
  std::vector<std::thread> pool;
  pool.reserve(size_t(w));
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int t = 0; t < w; ++t) {
    const int lo = int(std::int64_t(n) * t / w);
    const int hi = int(std::int64_t(n) * (t + 1) / w);
    pool.emplace_back([=, &fn, &error, &error_mutex]() {
      try {
        for (int i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace mckv
