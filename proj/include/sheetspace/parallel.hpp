#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace sheetspace {

// Fixed block size for reductions. Partial sums are formed per block and
// combined in block order, so totals are independent of the thread count.
inline constexpr std::size_t kReduceBlock = 256;

template <class F>
void parallel_for(std::size_t n, F&& body) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    body(static_cast<std::size_t>(i));
  }
}

// Deterministic blocked sum of term(0..n-1).
template <class F>
double blocked_sum(std::size_t n, F&& term) {
  const std::size_t nblocks = (n + kReduceBlock - 1) / kReduceBlock;
  std::vector<double> partial(nblocks, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(nblocks); ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kReduceBlock;
    const std::size_t hi = std::min(n, lo + kReduceBlock);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += term(i);
    partial[static_cast<std::size_t>(b)] = s;
  }
  double total = 0.0;
  for (double s : partial) total += s;
  return total;
}

// Max of term(0..n-1); 0 for empty ranges.
template <class F>
double blocked_max(std::size_t n, F&& term) {
  if (n == 0) return 0.0;
  const std::size_t nblocks = (n + kReduceBlock - 1) / kReduceBlock;
  std::vector<double> partial(nblocks, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(nblocks); ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kReduceBlock;
    const std::size_t hi = std::min(n, lo + kReduceBlock);
    double m = term(lo);
    for (std::size_t i = lo + 1; i < hi; ++i) m = std::max(m, term(i));
    partial[static_cast<std::size_t>(b)] = m;
  }
  double total = partial[0];
  for (double m : partial) total = std::max(total, m);
  return total;
}

}  // namespace sheetspace
