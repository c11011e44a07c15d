#include "dgcw/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace dgcw {

namespace {

std::size_t initial_workers() {
  if (const char* env = std::getenv("DGCW_THREADS")) {
    try {
      auto n = std::stoul(env);
      if (n > 0) return n;
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::atomic<std::size_t>& workers() {
  static std::atomic<std::size_t> n{initial_workers()};
  return n;
}

}  // namespace

std::size_t worker_count() { return workers().load(); }

void set_worker_count(std::size_t n) { workers().store(std::max<std::size_t>(1, n)); }

void parallel_for(std::size_t n, std::size_t min_chunk,
                  const std::function<void(std::size_t, std::size_t)>& body) {
  if (n == 0) return;
  std::size_t chunks = std::min(worker_count(), (n + std::max<std::size_t>(min_chunk, 1) - 1) /
                                                    std::max<std::size_t>(min_chunk, 1));
  if (chunks <= 1) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(chunks - 1);
  std::size_t step = (n + chunks - 1) / chunks;
  for (std::size_t c = 1; c < chunks; ++c) {
    std::size_t b = c * step, e = std::min(n, b + step);
    if (b < e) pool.emplace_back([&body, b, e] { body(b, e); });
  }
  body(0, std::min(n, step));
  for (auto& t : pool) t.join();
}

}  // namespace dgcw
