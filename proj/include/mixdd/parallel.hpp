#pragma once

// Fan-out over independent subdomain tasks. Tasks write to disjoint slots;
// reductions are done by the caller afterwards in index order, so results do
// not depend on scheduling.

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mixdd {

/// Number of worker threads used by parallel_for (1 = run inline).
int num_threads();
void set_num_threads(int n);

template <class F>
void parallel_for(int n, F&& f) {
  const int workers = std::min(num_threads(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  int error_index = n;
  std::mutex mutex;
  auto run = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        f(i);
      } catch (...) {
        std::lock_guard lock(mutex);
        // Keep the lowest failing index so the reported error is deterministic.
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers - 1));
  for (int t = 1; t < workers; ++t) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

} // namespace mixdd
