#pragma once

#include <cstddef>
#include <functional>

namespace seqmeta {

/// Worker count from SEQMETA_WORKERS, falling back to 1.
std::size_t default_workers();

/// Calls fn(i) for i in [0, count) on up to `workers` threads. Each index runs
/// exactly once; if any call throws, the exception from the lowest failing
/// index is rethrown after all workers join.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace seqmeta
