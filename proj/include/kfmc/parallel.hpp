#pragma once

#include <cstddef>
#include <functional>

namespace kfmc {

/// Worker count: hardware concurrency, capped by the KFMC_THREADS environment
/// variable when it is set to a positive integer.
unsigned thread_count();

/// Runs body(i) for i in [0, count), split into contiguous chunks across
/// thread_count() workers. Each index is visited exactly once, so results that
/// only write slot i are independent of the schedule.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace kfmc
