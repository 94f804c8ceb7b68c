#pragma once

#include <cstddef>
#include <functional>

namespace aid {

// Worker cap: AID_THREADS when set and positive, else hardware concurrency.
std::size_t worker_count();

// Runs fn(i) for i in [0, n). Work is split into contiguous index ranges, so
// any per-index output is independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace aid
