#pragma once

#include <functional>

namespace lis {

// Runs fn(0..count-1) on up to n_threads workers. Callers write results into
// per-index slots and pre-split RNG seeds by index, so the outcome does not
// depend on scheduling. n_threads <= 1 runs inline.
void parallel_for(int count, int n_threads, const std::function<void(int)>& fn);

}  // namespace lis
