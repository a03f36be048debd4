#pragma once

#include <cstddef>
#include <functional>

namespace dcnn {

/// Runs fn over [0, count) split into contiguous blocks, one per worker
/// thread. Every index is processed by exactly one worker and each worker
/// uses the same per-index arithmetic as the serial path, so results are
/// bitwise identical to a serial run. Falls back to a direct call when the
/// range is below `grain` or only one hardware thread is available.
void parallel_for(std::size_t count, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace dcnn
