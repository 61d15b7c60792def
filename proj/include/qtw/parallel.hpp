#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace qtw::parallel {

// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index writes its
// own result slot, so downstream reductions in index order are independent of
// the worker count and scheduling.
inline void for_indexed(size_t n, int workers, const std::function<void(size_t)>& fn) {
  if (n == 0) return;
  size_t nthreads = static_cast<size_t>(workers < 1 ? 1 : workers);
  if (nthreads > n) nthreads = n;
  if (nthreads == 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (size_t t = 0; t < nthreads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!err) err = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace qtw::parallel
