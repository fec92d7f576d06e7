#pragma once

#include <cstddef>
#include <exception>
#include <limits>

namespace envid {

// OpenMP loop over [0, n) with dynamic scheduling. If iterations throw, the
// exception from the lowest index is rethrown after the loop, so failures
// are reported the same way regardless of thread count.
template <typename F>
void parallel_for(std::size_t n, F&& body) {
  std::exception_ptr first;
  std::size_t first_index = std::numeric_limits<std::size_t>::max();
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(envid_parallel_for)
      if (static_cast<std::size_t>(i) < first_index) {
        first_index = static_cast<std::size_t>(i);
        first = std::current_exception();
      }
    }
  }
  if (first) std::rethrow_exception(first);
}

}  // namespace envid
