#pragma once

#include <cstddef>
#include <functional>

namespace sdpo {

/// Worker cap from SDPO_LAB_THREADS (default 1, invalid values ignored).
unsigned evaluation_threads();

/// Calls fn(i) for every i in [0, n), split into contiguous ranges over at
/// most evaluation_threads() threads. fn must only write to slot i of its
/// output; callers reduce sequentially afterwards. The first exception
/// thrown by any worker is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace sdpo
