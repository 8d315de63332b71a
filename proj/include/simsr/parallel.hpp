#pragma once

#include <cstddef>
#include <functional>

namespace simsr {

/// Worker count: SIMSR_THREADS if set and positive, else hardware concurrency.
std::size_t thread_count();

/// Keeps freed large blocks in the heap instead of returning them to the OS,
/// so repeated tape recordings reuse already-mapped pages. Process-wide.
void configure_allocator();

/// Runs body(i) for i in [0, n) over up to thread_count() threads. Each index
/// runs exactly once; callers own any cross-index synchronization.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace simsr
