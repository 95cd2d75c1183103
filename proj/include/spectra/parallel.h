#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace spectra {

// Global thread cap shared by every parallel kernel. Kernels are written so
// their results do not depend on this value: loops write disjoint outputs and
// reductions always use the fixed block boundaries below.
int num_threads();
void set_num_threads(int n);
void init_threads_from_env();  // reads SPECTRAPIPE_THREADS

// Fixed block size for reductions. Partial sums are formed over the same
// index ranges no matter how many threads run, so totals are bit-stable.
inline constexpr std::int64_t kReduceBlock = 1024;

template <class F>
void parallel_for(std::int64_t n, F&& body) {
  const int nt = num_threads();
  if (nt <= 1 || n < 4) {
    for (std::int64_t i = 0; i < n; ++i) body(i);
    return;
  }
#pragma omp parallel for schedule(static) num_threads(nt)
  for (std::int64_t i = 0; i < n; ++i) body(i);
}

// sum_i term(i), blocked serially inside fixed blocks, block sums folded in
// block order.
template <class F>
double deterministic_transform_sum(std::int64_t n, F&& term) {
  if (n <= 0) return 0.0;
  const std::int64_t nb = (n + kReduceBlock - 1) / kReduceBlock;
  std::vector<double> partial(static_cast<std::size_t>(nb), 0.0);
  parallel_for(nb, [&](std::int64_t b) {
    const std::int64_t lo = b * kReduceBlock;
    const std::int64_t hi = std::min(lo + kReduceBlock, n);
    double acc = 0.0;
    for (std::int64_t i = lo; i < hi; ++i) acc += term(i);
    partial[static_cast<std::size_t>(b)] = acc;
  });
  double total = 0.0;
  for (double v : partial) total += v;
  return total;
}

double deterministic_sum(std::span<const double> xs);

// Accumulates per-item contributions into a `width`-long vector. Items are
// grouped into fixed blocks; each block fills a private buffer serially, the
// buffers are folded in block order. `add_item(i, buf)` must only add into
// `buf`.
template <class AddItem>
void deterministic_accumulate(std::int64_t n_items, std::int64_t block,
                              std::size_t width, AddItem&& add_item,
                              std::span<double> out) {
  if (n_items <= 0) return;
  const std::int64_t nb = (n_items + block - 1) / block;
  std::vector<double> buf(static_cast<std::size_t>(nb) * width, 0.0);
  parallel_for(nb, [&](std::int64_t b) {
    std::span<double> local(buf.data() + static_cast<std::size_t>(b) * width,
                            width);
    const std::int64_t lo = b * block;
    const std::int64_t hi = std::min(lo + block, n_items);
    for (std::int64_t i = lo; i < hi; ++i) add_item(i, local);
  });
  for (std::int64_t b = 0; b < nb; ++b) {
    const double* src = buf.data() + static_cast<std::size_t>(b) * width;
    for (std::size_t j = 0; j < width; ++j) out[j] += src[j];
  }
}

}  // namespace spectra
