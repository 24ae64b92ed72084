#pragma once

#include <cstddef>
#include <exception>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace zrp {

/// Reference loop: result r = task(r) in index order.
template <class Task>
auto run_replicas_serial(std::size_t count, Task&& task) {
  using Result = decltype(task(std::size_t{0}));
  std::vector<Result> out;
  out.reserve(count);
  for (std::size_t r = 0; r < count; ++r) out.push_back(task(r));
  return out;
}

/// OpenMP replica loop with results stored by index, so the output is
/// identical to run_replicas_serial whenever each task depends only on its
/// index. The first exception by index is rethrown after the loop.
template <class Task>
auto run_replicas(std::size_t count, int workers, Task&& task) {
  using Result = decltype(task(std::size_t{0}));
  std::vector<Result> out(count);
  std::vector<std::exception_ptr> errors(count);
#ifdef _OPENMP
  const int threads = workers > 0 ? workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
#else
  (void)workers;
#endif
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(count); ++r) {
    try {
      out[static_cast<std::size_t>(r)] = task(static_cast<std::size_t>(r));
    } catch (...) {
      errors[static_cast<std::size_t>(r)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace zrp
