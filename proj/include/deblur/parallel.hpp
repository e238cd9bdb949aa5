#pragma once

#include <cstdint>
#include <functional>

namespace deblur {

// Worker count for internal parallelism. 0 restores the hardware default.
// Parallel loops assign each index to exactly one worker and keep a fixed
// reduction order inside every output element, so results are identical for
// any thread count.
void set_num_threads(int n);
int num_threads();

// Runs fn(begin, end) over contiguous chunks of [0, n). Blocks until done.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn);

} // namespace deblur
