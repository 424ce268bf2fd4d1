#pragma once

#include <cstddef>
#include <exception>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mibci {

/// Resolves a requested worker count; 0 means "whatever OpenMP offers".
inline int resolve_threads(int requested) noexcept {
  if (requested > 0) return requested;
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

/// Runs body(i) for i in [0, n).  Iterations must write disjoint outputs.
/// If any iteration throws, the exception of the lowest index is rethrown,
/// so the reported error does not depend on the worker count.
template <class Body>
void parallel_for(std::size_t n, int threads, Body&& body) {
  std::vector<std::exception_ptr> errors(n);
  const int workers = resolve_threads(threads);
  const auto count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic) num_threads(workers) if (workers > 1)
  for (long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace mibci
