#ifndef CFC_PARALLEL_HPP_
#define CFC_PARALLEL_HPP_

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cfc {

namespace detail {
inline std::atomic<int>& thread_cap() {
  static std::atomic<int> cap{0};  // 0 = one worker per hardware thread
  return cap;
}
}  // namespace detail

inline int max_threads() {
  const int cap = detail::thread_cap().load();
  if (cap > 0) return cap;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

inline void set_max_threads(int n) { detail::thread_cap().store(n); }

// Each index runs exactly once; callers only write disjoint state per
// index, so results do not depend on the schedule or thread count.
template <typename F>
void parallel_for(std::size_t n, F&& body) {
  if (n == 0) return;
#ifdef _OPENMP
  const int threads = static_cast<int>(
      std::min<std::size_t>(static_cast<std::size_t>(max_threads()), n));
  if (threads > 1 && !omp_in_parallel()) {
    std::exception_ptr first_error = nullptr;
    std::atomic<bool> failed{false};
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
      try {
        body(static_cast<std::size_t>(i));
      } catch (...) {
        bool expected = false;
        if (failed.compare_exchange_strong(expected, true)) {
#pragma omp critical(cfc_parallel_error)
          first_error = std::current_exception();
        }
      }
    }
    if (first_error) std::rethrow_exception(first_error);
    return;
  }
#endif
  for (std::size_t i = 0; i < n; ++i) body(i);
}

}  // namespace cfc

#endif  // CFC_PARALLEL_HPP_
