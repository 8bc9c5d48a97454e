#pragma once

#include <cstddef>
#include <functional>

namespace icm {

/// Worker count used by parallel sections. 0 restores the default (all cores).
void set_num_threads(unsigned n);
unsigned num_threads();

/// Runs body(i) for i in [0, count). Tasks are claimed by index, so any
/// result written to slot i is independent of the thread count. The first
/// exception thrown by a task is rethrown after all workers join.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace icm
