#pragma once

#include <cstddef>
#include <functional>

namespace texsyn {

// Upper bound on worker threads used by the kernels. 0 restores the default
// (hardware concurrency). Results never depend on this value.
void set_thread_count(std::size_t n);
std::size_t thread_count();

// Splits [0, count) into contiguous chunks and runs fn(begin, end) on each.
// Runs inline when there is one thread or the estimated work is small.
void parallel_for(std::size_t count, std::size_t work_per_item,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace texsyn
