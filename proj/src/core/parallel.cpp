#include "hcnf/core/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace hcnf {

namespace {
std::atomic<int> g_threads{1};
}

void set_num_threads(int n) { g_threads.store(std::max(1, n)); }

int num_threads() { return g_threads.load(); }

std::size_t parallel_chunks(std::size_t n) {
  return std::min<std::size_t>(n, static_cast<std::size_t>(num_threads()));
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
  const std::size_t chunks = parallel_chunks(n);
  if (chunks <= 1) {
    if (n > 0) fn(0, n);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(chunks - 1);
  const std::size_t base = n / chunks, extra = n % chunks;
  std::size_t begin = 0;
  std::size_t first_end = 0;
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t end = begin + base + (c < extra ? 1 : 0);
    if (c == 0) {
      first_end = end;
    } else {
      workers.emplace_back(fn, begin, end);
    }
    begin = end;
  }
  fn(0, first_end);
  for (auto& w : workers) w.join();
}

}  // namespace hcnf
