#pragma once

#include <cstddef>
#include <functional>

namespace psk {

/// Worker cap: the PSK_THREADS environment variable when set to a positive
/// integer, otherwise std::thread::hardware_concurrency().
std::size_t max_threads();

/// Runs fn over contiguous sub-ranges of [0, count), one range per worker.
/// Each index belongs to exactly one range, so as long as fn writes disjoint
/// outputs per index the result is independent of the thread count. Ranges
/// smaller than `grain` indices run serially on the calling thread.
void parallel_for(std::size_t count, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& fn);

} // namespace psk
