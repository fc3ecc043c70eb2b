#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace earco {

/// Runs fn(i) for i in [0, n) on at most `concurrency` threads. Results must
/// be written to pre-sized, index-addressed storage so output order never
/// depends on scheduling. The first exception thrown (lowest index wins) is
/// rethrown after all workers finish.
template <class Fn>
void parallel_for(std::size_t n, std::size_t concurrency, Fn&& fn) {
  const auto workers = std::min(n, std::max<std::size_t>(1, concurrency));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  std::size_t error_index = n;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (i < error_index) {
              error_index = i;
              error = std::current_exception();
            }
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace earco
