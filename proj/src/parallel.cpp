#include "reid/parallel.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace reid {

namespace {
std::atomic<int> g_max_workers{0};  // 0 = library default
}

void set_max_workers(int n) { g_max_workers.store(n > 0 ? n : 0); }

int max_workers() {
  const int n = g_max_workers.load();
  if (n > 0) return n;
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace reid
