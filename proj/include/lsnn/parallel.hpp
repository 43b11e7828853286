#pragma once

// Block-parallel loops with reductions whose result does not depend on the
// number of worker threads. Work is always cut into the same fixed blocks;
// threads only decide who computes which block. Partial results are stored
// per block and combined by a fixed pairwise tree.

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <memory>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <tbb/blocked_range.h>
#include <tbb/global_control.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

namespace lsnn {

/// Pairwise (cascade) sum in index order. Deterministic for a given input.
inline double pairwise_sum(std::span<const double> v) {
  const std::size_t n = v.size();
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

/// Tree-combines equally sized vectors in place: after the call, parts[0]
/// holds the sum. The tree shape depends only on parts.size().
inline void pairwise_merge(std::vector<std::vector<double>>& parts) {
  const std::size_t n = parts.size();
  for (std::size_t stride = 1; stride < n; stride *= 2) {
    for (std::size_t i = 0; i + stride < n; i += 2 * stride) {
      auto& dst = parts[i];
      const auto& src = parts[i + stride];
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

/// Number of worker threads to use when none was requested explicitly:
/// LSNN_THREADS if set and positive, else the hardware concurrency.
inline int default_thread_count() {
  if (const char* env = std::getenv("LSNN_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Worker pool of a fixed size. Work started through run() uses exactly
/// that many threads (oversubscribing small machines if asked to), which is
/// how --threads is honoured. Results never depend on the size.
class ThreadLimit {
 public:
  explicit ThreadLimit(int threads)
      : threads_(std::max(1, threads)),
        control_(std::make_unique<tbb::global_control>(tbb::global_control::max_allowed_parallelism,
                                                       static_cast<std::size_t>(threads_))),
        arena_(std::make_unique<tbb::task_arena>(threads_)) {}

  int threads() const { return threads_; }

  template <class F>
  decltype(auto) run(F&& f) {
    return arena_->execute(std::forward<F>(f));
  }

 private:
  int threads_;
  std::unique_ptr<tbb::global_control> control_;
  std::unique_ptr<tbb::task_arena> arena_;
};

/// Calls body(block_index) for every block in [0, n_blocks). Blocks may run
/// concurrently; body must only write block-private storage.
template <class Body>
void for_each_block(std::size_t n_blocks, Body&& body) {
  if (n_blocks == 0) return;
  if (n_blocks == 1) {
    body(std::size_t{0});
    return;
  }
  tbb::parallel_for(tbb::blocked_range<std::size_t>(0, n_blocks, 1),
                    [&](const tbb::blocked_range<std::size_t>& r) {
                      for (std::size_t b = r.begin(); b != r.end(); ++b) body(b);
                    });
}

}  // namespace lsnn
