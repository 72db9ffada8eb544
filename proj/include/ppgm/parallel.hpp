#pragma once

#include <cstddef>
#include <functional>

namespace ppgm {

/// Worker count; PPGM_THREADS overrides the default of 1.
int thread_count();
void set_thread_count(int n);

/// Runs fn(begin, end) over contiguous chunks of [0, n).
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace ppgm
