#pragma once

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace sslse {

/// Runs fn(i) for i in [0, n) on up to `workers` threads (strided
/// assignment, so results never depend on the worker count). The first
/// exception thrown by any call is rethrown after all threads join.
template <class Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&](std::size_t begin) {
    for (std::size_t i = begin; i < n; i += workers) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(run, w);
  run(0);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace sslse
