#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace bmatree {

// Runs fn(i) for i in [0, count) on up to `workers` threads. Each item must
// write only to its own output slot. If items throw, the exception of the
// lowest-numbered failing item is rethrown, whatever the schedule was.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
  std::vector<std::exception_ptr> errors(count);
  auto run = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(count, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) run(i);
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace bmatree
