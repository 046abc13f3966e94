#pragma once
// Static-partition data parallelism. Work is split into contiguous chunks
// whose boundaries depend only on the item count and thread count, and
// callers write results into per-item slots, so output never depends on
// scheduling.

#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace s3a {

// Global worker cap (CLI --threads). 1 means run inline on the caller.
void set_num_threads(std::size_t n);
std::size_t num_threads();

// Calls fn(begin, end) over a partition of [0, n). Chunks are at least
// `grain` items. Exceptions from workers are rethrown on the caller.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t grain, Fn&& fn) {
  if (n == 0) return;
  if (grain == 0) grain = 1;
  std::size_t workers = num_threads();
  const std::size_t max_chunks = (n + grain - 1) / grain;
  if (workers > max_chunks) workers = max_chunks;
  if (workers <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  const std::size_t per = n / workers;
  const std::size_t extra = n % workers;
  auto bounds = [&](std::size_t w) {
    const std::size_t begin = w * per + (w < extra ? w : extra);
    return std::pair{begin, begin + per + (w < extra ? 1 : 0)};
  };
  for (std::size_t w = 1; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        auto [b, e] = bounds(w);
        fn(b, e);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  try {
    auto [b, e] = bounds(0);
    fn(b, e);
  } catch (...) {
    errors[0] = std::current_exception();
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace s3a
