#pragma once

#include <cstddef>
#include <functional>

namespace hir {

// Worker count: HIR_THREADS if set and positive, otherwise hardware concurrency.
std::size_t worker_count();

// Splits [0, n) into `workers` contiguous shards and runs fn(worker, begin, end)
// for each. Shard boundaries depend only on n and workers. Exceptions thrown by
// a worker are rethrown on the calling thread.
void parallel_shards(std::size_t n, std::size_t workers,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

}  // namespace hir
