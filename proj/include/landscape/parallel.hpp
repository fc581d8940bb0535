#pragma once

#include <cstddef>
#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace landscape {

enum class Execution { serial, parallel };

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

// Calls f(i) for i in [0, n). Iterations must be independent.
template <class F>
void for_each_index(std::size_t n, Execution ex, F&& f) {
  if (ex == Execution::serial) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  const long long count = static_cast<long long>(n);
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic, 1)
  for (long long i = 0; i < count; ++i) {
    try {
      f(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(landscape_for_each_error)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
}

}  // namespace landscape
