#pragma once

#include <cstddef>
#include <functional>

namespace lfp {

/// Number of workers used by the parallel helpers: LFP_THREADS when set,
/// otherwise the hardware concurrency.
unsigned worker_count();

/// Calls fn(i) for i in [0, n) across up to `workers` threads. Each index
/// runs exactly once; results must be written to per-index slots. The first
/// exception thrown by any call is rethrown after all workers finish.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn);

}  // namespace lfp
