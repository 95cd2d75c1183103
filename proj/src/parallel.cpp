#include "spectra/parallel.h"

#include <atomic>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace spectra {

namespace {
std::atomic<int> g_threads{0};
}

void set_num_threads(int n) {
  g_threads.store(n < 1 ? 1 : n, std::memory_order_relaxed);
}

void init_threads_from_env() {
  const char* env = std::getenv("SPECTRAPIPE_THREADS");
  if (env != nullptr) {
    const int n = std::atoi(env);
    set_num_threads(n < 1 ? 1 : n);
    return;
  }
#ifdef _OPENMP
  set_num_threads(omp_get_max_threads());
#else
  set_num_threads(1);
#endif
}

int num_threads() {
  int t = g_threads.load(std::memory_order_relaxed);
  if (t < 1) {
    init_threads_from_env();
    t = g_threads.load(std::memory_order_relaxed);
  }
  return t;
}

double deterministic_sum(std::span<const double> xs) {
  return deterministic_transform_sum(
      static_cast<std::int64_t>(xs.size()),
      [&](std::int64_t i) { return xs[static_cast<std::size_t>(i)]; });
}

}  // namespace spectra
