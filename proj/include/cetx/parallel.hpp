#pragma once

#include <cstddef>
#include <functional>

namespace cetx {

/// Thread cap from CETX_THREADS; 1 when unset or invalid.
std::size_t configured_threads();

/// Calls fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// processed exactly once; callers write results by index so the outcome
/// does not depend on scheduling.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace cetx
