#pragma once

// Data-parallel loops over fixed tiles. Tile boundaries depend only on the
// range and the tile size, never on the thread count, so reductions that
// combine per-tile partials in tile order are bit-reproducible.

#include <cstddef>
#include <functional>
#include <vector>

namespace mhdci {

void set_thread_count(int threads);  // 0 = hardware concurrency
int thread_count();

/// Calls body(begin, end) for each tile of [0, count).
void parallel_tiles(std::size_t count, std::size_t tile,
                    const std::function<void(std::size_t, std::size_t)>& body);

/// Sums per-tile partials in tile order.
double parallel_sum(std::size_t count, std::size_t tile,
                    const std::function<double(std::size_t, std::size_t)>& body);

/// Order-fixed max over tiles.
double parallel_max(std::size_t count, std::size_t tile,
                    const std::function<double(std::size_t, std::size_t)>& body);

}  // namespace mhdci
