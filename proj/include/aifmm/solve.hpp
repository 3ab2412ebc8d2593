#pragma once

#include "aifmm/factor.hpp"

namespace aifmm {

// b and the result are indexed by the original point ordering; each column is one right-hand side.
Mat solve(const Factorization& fact, const Mat& b);
Vec solve(const Factorization& fact, const Vec& b);

}  // namespace aifmm
