#pragma once

#include <cstddef>
#include <functional>

namespace vrel {

/// Worker count used by the batch routines; 0 means hardware concurrency. Defaults to 1.
void set_thread_count(std::size_t n);
std::size_t thread_count();

/// Runs fn(i) for i in [0, n) split into contiguous chunks across worker threads. Callers must
/// write results into per-index slots so that output never depends on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace vrel
