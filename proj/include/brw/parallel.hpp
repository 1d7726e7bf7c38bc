#ifndef BRW_PARALLEL_HPP
#define BRW_PARALLEL_HPP

#include <cstdint>
#include <exception>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

// Replica-parallel execution. Work item i must write only into slot i of
// caller-owned storage; reductions happen serially after the loop, in index
// order, so outputs are identical for every thread count. threads == 1 is
// the serial reference path used by the equivalence tests and the benchmark.

namespace brw {

inline int hardware_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// threads: 0 = all available, 1 = serial reference, n = exactly n.
template <typename Fn>
void for_each_replica(std::uint64_t count, int threads, Fn&& fn) {
  if (threads == 0) threads = hardware_threads();
  if (threads <= 1) {
    for (std::uint64_t i = 0; i < count; ++i) fn(i);
    return;
  }
#ifdef _OPENMP
  std::exception_ptr first_error = nullptr;
  std::mutex error_mu;
  const std::int64_t n = static_cast<std::int64_t>(count);
#pragma omp parallel for num_threads(threads) schedule(dynamic, 16)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      fn(static_cast<std::uint64_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mu);
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);
#else
  for (std::uint64_t i = 0; i < count; ++i) fn(i);
#endif
}

}  // namespace brw

#endif  // BRW_PARALLEL_HPP
