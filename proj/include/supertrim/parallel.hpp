#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace supertrim {

/// Calls fn(i) for every i in [0, n). Work is interleaved across `threads`
/// workers (0 = hardware concurrency). Since each replica draws from its own
/// RNG stream and writes only its own slot, results do not depend on the
/// thread count. The exception of the smallest failing index is rethrown.
template <class Fn>
void for_each_replica(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  // Each worker stops at its first failure, so the smallest failing index
  // overall is found and rethrown regardless of scheduling.
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::size_t> failed_at(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += threads) {
        try {
          fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
          failed_at[w] = i;
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  const auto first = std::min_element(failed_at.begin(), failed_at.end()) - failed_at.begin();
  if (errors[static_cast<std::size_t>(first)]) std::rethrow_exception(errors[static_cast<std::size_t>(first)]);
}

}  // namespace supertrim
