#pragma once

// Data-parallel loops with reductions whose result does not depend on the
// number of worker threads: work is cut into fixed-size blocks, each block is
// reduced sequentially, and block partials are combined by a pairwise tree.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <span>
#include <thread>
#include <vector>

namespace isolab {

namespace detail {
inline std::atomic<int>& thread_setting() {
  static std::atomic<int> n{1};
  return n;
}
}  // namespace detail

inline void set_threads(int n) { detail::thread_setting() = std::max(1, n); }
inline int threads() { return detail::thread_setting().load(); }

inline constexpr std::size_t kBlockSize = 2048;

/// Calls body(begin, end) over fixed blocks covering [0, n).
template <class Body>
void parallel_blocks(std::size_t n, Body&& body, std::size_t block = kBlockSize) {
  const std::size_t nblocks = (n + block - 1) / block;
  const int workers = static_cast<int>(std::min<std::size_t>(threads(), nblocks));
  if (workers <= 1) {
    for (std::size_t b = 0; b < nblocks; ++b) body(b * block, std::min(n, (b + 1) * block));
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t b = next++; b < nblocks; b = next++) body(b * block, std::min(n, (b + 1) * block));
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (int t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
}

template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  parallel_blocks(n, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) body(i);
  });
}

inline double pairwise_sum(std::span<const double> v) {
  if (v.empty()) return 0.0;
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

/// Deterministic sum of term(i) for i in [0, n).
template <class Term>
double parallel_sum(std::size_t n, Term&& term) {
  const std::size_t nblocks = (n + kBlockSize - 1) / kBlockSize;
  std::vector<double> partial(nblocks, 0.0);
  parallel_blocks(n, [&](std::size_t b, std::size_t e) {
    double s = 0.0;
    for (std::size_t i = b; i < e; ++i) s += term(i);
    partial[b / kBlockSize] = s;
  });
  return pairwise_sum(partial);
}

}  // namespace isolab
