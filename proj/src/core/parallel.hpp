#pragma once

#include <cstddef>
#include <functional>

namespace repsample {

// Worker count from REPSAMPLE_THREADS (default 1). Clamped to [1, 256].
std::size_t thread_count();

// Runs body(i) for i in [0, n). Work is split into contiguous blocks, one per
// worker. Callers write results into per-index slots and reduce them in index
// order, so outputs do not depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &body);

} // namespace repsample
