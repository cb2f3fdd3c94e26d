#include "parallel.hpp"

#include <algorithm>
#include <thread>
#include <vector>

namespace gw {

namespace {
int g_threads = 0;  // 0 = pick from hardware

int effective_threads() {
  if (g_threads > 0) return g_threads;
  unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::clamp<unsigned>(hw, 1u, 8u));
}
}  // namespace

void set_num_threads(int n) { g_threads = n; }

int num_threads() { return effective_threads(); }

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body) {
  if (n <= 0) return;
  int workers = effective_threads();
  if (workers <= 1 || n < 2) {
    body(0, n);
    return;
  }
  workers = static_cast<int>(std::min<std::int64_t>(workers, n));
  std::int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers - 1));
  for (int w = 1; w < workers; ++w) {
    std::int64_t lo = w * chunk;
    std::int64_t hi = std::min<std::int64_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  body(0, std::min<std::int64_t>(chunk, n));
  for (auto& t : pool) t.join();
}

}  // namespace gw
