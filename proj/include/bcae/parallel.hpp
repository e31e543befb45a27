#ifndef BCAE_PARALLEL_HPP
#define BCAE_PARALLEL_HPP

// Bounded worker pool over an index range. Tasks write to disjoint,
// pre-sized slots, so results never depend on the worker count.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace bcae {

// Runs fn(i) for i in [0, count) on up to `jobs` threads. The first
// exception thrown by a task is rethrown after all workers finish.
template <class Fn>
void parallel_for(std::size_t count, unsigned jobs, Fn&& fn) {
  if (count == 0) return;
  const auto workers = static_cast<unsigned>(std::clamp<std::size_t>(jobs, 1, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < count;) {
          try {
            fn(i);
          } catch (...) {
            const std::lock_guard lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace bcae

#endif  // BCAE_PARALLEL_HPP
