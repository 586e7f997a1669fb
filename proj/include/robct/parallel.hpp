#pragma once

#include <cstddef>
#include <functional>

namespace robct {

/// Caps worker threads for all parallel loops (0 restores the default).
void set_thread_count(int n);
int thread_count();

/// Calls fn(i) for i in [0, n). Each index runs exactly once; callers write
/// results to per-index slots so output does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace robct
