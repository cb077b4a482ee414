// Deterministic work distribution: fn(i) writes only to slot i, so results
// cannot depend on scheduling; exceptions rethrow for the lowest index.

#pragma once

#include <cstddef>
#include <functional>

namespace pscore {

void parallel_for(std::size_t n, unsigned threads,
                  const std::function<void(std::size_t)>& fn);

// 0 means "use the hardware concurrency"
unsigned resolve_thread_count(unsigned requested);

} // namespace pscore
