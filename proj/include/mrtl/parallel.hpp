#pragma once

#include <cstddef>
#include <functional>

namespace mrtl {

// Worker count for internal fan-out. Defaults to MRTL_THREADS (or 1).
std::size_t thread_count();
void set_thread_count(std::size_t n);

// Runs fn(i) for i in [0, n). Callers must make each i write disjoint state;
// reductions happen afterwards in index order so results do not depend on
// the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace mrtl
