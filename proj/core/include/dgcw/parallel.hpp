#pragma once

#include <cstddef>
#include <functional>

namespace dgcw {

// Worker count: DGCW_THREADS if set, otherwise hardware concurrency.
std::size_t worker_count();
void set_worker_count(std::size_t n);

// Splits [0, n) into contiguous chunks, one per worker. Callers must make
// each index's result independent of the chunking so output does not depend
// on the worker count.
void parallel_for(std::size_t n, std::size_t min_chunk,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace dgcw
