#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace spqt {

/// Runs fn(block) for block = 0..n_blocks-1 on up to `threads` workers.
/// Each block writes only its own slot, so results are deterministic no
/// matter how blocks get scheduled. The first exception wins and is rethrown.
inline void parallel_blocks(long n_blocks, int threads, const std::function<void(long)>& fn) {
  if (n_blocks <= 0) return;
  if (threads < 1) threads = 1;
  if (threads == 1 || n_blocks == 1) {
    for (long b = 0; b < n_blocks; ++b) fn(b);
    return;
  }
  std::atomic<long> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto worker = [&]() {
    for (;;) {
      const long b = next.fetch_add(1);
      if (b >= n_blocks) return;
      try {
        fn(b);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int n_workers = static_cast<int>(std::min<long>(threads, n_blocks));
  pool.reserve(n_workers);
  for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace spqt
