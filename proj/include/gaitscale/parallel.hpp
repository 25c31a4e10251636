#pragma once

#include <functional>

namespace gaitscale {

/// Runs fn(0..n-1) on up to `jobs` threads. Tasks must write to disjoint,
/// preallocated slots; the first exception (lowest index) is rethrown.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

}  // namespace gaitscale
