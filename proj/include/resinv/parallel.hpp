#pragma once

#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace resinv {

// Static chunked parallel loop. Workers write into caller-owned slots indexed
// by i and any reduction happens afterwards in index order, so results do not
// depend on the thread count.
inline void parallel_for(int n, int n_threads,
                         const std::function<void(int)>& fn) {
  if (n <= 0) return;
  if (n_threads <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = std::min(n_threads, n);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (int i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& err : errors)
    if (err) std::rethrow_exception(err);
}

}  // namespace resinv
