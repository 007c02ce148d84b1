#include "mhdci/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace mhdci {

namespace {
std::atomic<int> g_threads{0};

int resolved_threads() {
  int t = g_threads.load();
  if (t <= 0) t = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return t;
}
}  // namespace

void set_thread_count(int threads) { g_threads.store(std::max(0, threads)); }
int thread_count() { return resolved_threads(); }

void parallel_tiles(std::size_t count, std::size_t tile,
                    const std::function<void(std::size_t, std::size_t)>& body) {
  if (count == 0) return;
  tile = std::max<std::size_t>(tile, 1);
  const std::size_t ntiles = (count + tile - 1) / tile;
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(resolved_threads()), ntiles);
  if (workers <= 1) {
    for (std::size_t t = 0; t < ntiles; ++t) body(t * tile, std::min(count, (t + 1) * tile));
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= ntiles) return;
      try {
        body(t * tile, std::min(count, (t + 1) * tile));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

double parallel_sum(std::size_t count, std::size_t tile,
                    const std::function<double(std::size_t, std::size_t)>& body) {
  tile = std::max<std::size_t>(tile, 1);
  std::vector<double> partial((count + tile - 1) / tile, 0.0);
  parallel_tiles(count, tile, [&](std::size_t b, std::size_t e) { partial[b / tile] = body(b, e); });
  double s = 0.0;
  for (double p : partial) s += p;
  return s;
}

double parallel_max(std::size_t count, std::size_t tile,
                    const std::function<double(std::size_t, std::size_t)>& body) {
  tile = std::max<std::size_t>(tile, 1);
  std::vector<double> partial((count + tile - 1) / tile, 0.0);
  parallel_tiles(count, tile, [&](std::size_t b, std::size_t e) { partial[b / tile] = body(b, e); });
  double s = 0.0;
  for (double p : partial) s = std::max(s, p);
  return s;
}

}  // namespace mhdci
