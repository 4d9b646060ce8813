#pragma once

#include <cstddef>
#include <functional>

namespace faultarm {

/// Runs fn(i) for every i in [0, n) on up to `workers` threads. Indices are
/// handed out dynamically; callers write results by index so the outcome does
/// not depend on scheduling. The first exception thrown is rethrown.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace faultarm
