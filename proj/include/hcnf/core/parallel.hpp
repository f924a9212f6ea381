#pragma once

#include <cstddef>
#include <functional>

namespace hcnf {

// Process-wide worker count used by the parallel kernels. 1 is the
// single-threaded reference mode.
void set_num_threads(int n);
int num_threads();

// Splits [0, n) into num_threads() contiguous chunks. Chunk boundaries depend
// only on n and the thread count, so per-chunk reductions are reproducible.
void parallel_for(std::size_t n, const std::function<void(std::size_t begin, std::size_t end)>& fn);

// Number of chunks parallel_for will use for n items.
std::size_t parallel_chunks(std::size_t n);

}  // namespace hcnf
