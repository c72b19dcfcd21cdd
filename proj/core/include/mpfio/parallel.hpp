#pragma once

#include <cstddef>
#include <functional>

namespace mpfio {

/// Number of worker threads used by data-parallel maps. Defaults to the
/// hardware concurrency.
int worker_count();
void set_worker_count(int workers);

/// Runs body(begin, end) over disjoint chunks of [0, n). Chunks write to
/// disjoint output slots only; reductions are done by the caller afterwards,
/// so results do not depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk = 64);

}  // namespace mpfio
