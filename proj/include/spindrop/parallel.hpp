#pragma once

#include <cstddef>
#include <functional>

namespace spindrop {

// Max worker threads: min(hardware_concurrency, SPINDROP_THREADS if set).
int max_threads();

// Runs fn(i) for i in [0, n). Work items must write disjoint outputs; the
// split is by contiguous chunks, so results are bit-identical to the
// sequential loop regardless of thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace spindrop
