#include "pmcr/threading.hpp"

#include <thread>
#include <vector>

namespace pmcr {

namespace {
int g_threads = 1;
}

void set_num_threads(int n) { g_threads = n < 1 ? 1 : n; }
int num_threads() { return g_threads; }

void parallel_for(int jobs, const std::function<void(int)>& fn) {
  if (jobs <= 0) return;
  const int workers = std::min(g_threads, jobs);
  if (workers <= 1) {
    for (int j = 0; j < jobs; j++) fn(j);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(size_t(workers));
  for (int t = 0; t < workers; t++) {
    pool.emplace_back([&, t]() {
      for (int j = t; j < jobs; j += workers) fn(j);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace pmcr
