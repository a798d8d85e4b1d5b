#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace amaml {

inline int hardware_threads() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers and returns one
/// exception slot per index (null on success). Work is pulled from an atomic
/// counter; callers must make fn(i) independent of scheduling.
inline std::vector<std::exception_ptr> parallel_try(int n, int threads,
                                                    const std::function<void(int)>& fn) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  if (n <= 0) return errors;
  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
    return errors;
  }
  std::atomic<int> next{0};
  auto body = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& th : pool) th.join();
  return errors;
}

/// parallel_try, but rethrows the lowest-index exception after joining.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  auto errors = parallel_try(n, threads, fn);
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace amaml
