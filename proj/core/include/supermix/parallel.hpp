#pragma once

#include <cstddef>
#include <functional>

namespace supermix {

/// Hardware concurrency clamped to [1, 16].
int default_worker_count();

/// Runs fn(i) for every i in [0, n) on up to `workers` threads (0 picks the
/// default). fn must only write state owned by index i; completion order is
/// unspecified. The first exception thrown by any fn is rethrown after join.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace supermix
