#pragma once

#include <cstdint>
#include <functional>

namespace octarec {

/// Caps the worker count used by parallel_for. 1 disables threading.
void set_max_threads(int n);
int max_threads();

/// Runs fn(begin, end) over a partition of [0, n). Chunks are disjoint, so
/// workers writing only inside their range produce the same result for any
/// thread count.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn);

} // namespace octarec
