#pragma once

#include <exception>

#include "aifmm/types.hpp"

namespace aifmm::detail {

// Runs body(i) for i in [0, n). The first exception thrown by any iteration is rethrown.
template <class Body>
void for_each_index(Index n, Exec exec, Body&& body) {
  if (exec == Exec::serial) {
    for (Index i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (Index i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
#pragma omp critical(aifmm_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace aifmm::detail
