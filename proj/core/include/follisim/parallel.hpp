#pragma once

#include <cstddef>
#include <functional>

namespace follisim {

// Global worker-count setting shared by every parallel section. 0 means
// resolve automatically: the FOLLICLE_THREADS environment variable when set,
// the hardware concurrency otherwise. Thread counts only change scheduling,
// never results.
void set_parallel_threads(int n);
int parallel_threads();         // the raw setting (0 = auto)
int resolve_parallel_threads(); // what a section will actually use (>= 1)

// Runs body(i) for every i in [0, n). Work is split into contiguous index
// chunks, one per worker; each worker walks its chunk in increasing order, so
// output written to disjoint per-index slots lands identically for any worker
// count. The first raised exception (in chunk order) is rethrown after all
// workers have joined.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace follisim
