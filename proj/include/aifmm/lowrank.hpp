#pragma once

#include <functional>

#include "aifmm/types.hpp"

namespace aifmm {

// Truncated column-pivoted QR. R is stored in the original column order, so M ~= Q * R.
struct RRQRResult {
  Mat Q;
  Mat R;
  Index rank = 0;
  IndexList perm;  // perm[k] = original column chosen at step k
};

RRQRResult rrqr(const Mat& m, double eps);

using EntryFn = std::function<Complex(Index row, Index col)>;

struct PivotSet {
  IndexList rows;
  IndexList cols;
  Index rank() const { return static_cast<Index>(rows.size()); }
};

struct AcaOptions {
  double eps = 1e-10;
  Index max_rank = -1;  // < 0 means min(|T|, |S|)
  Index min_rank = 0;   // keep going past convergence up to this rank when possible
};

// Partially pivoted ACA on the block entry(T, S). Pivots are returned as members of T and S.
PivotSet aca_pivots(const EntryFn& entry, const IndexList& rows, const IndexList& cols, const AcaOptions& opts);

// LU of a skeleton block with a singularity guard.
class SkeletonSolver {
 public:
  explicit SkeletonSolver(const Mat& pivot_block);
  Mat solve(const Mat& rhs) const;        // A^{-1} rhs
  Mat right_solve(const Mat& lhs) const;  // lhs A^{-1}

 private:
  Eigen::PartialPivLU<Mat> lu_;
  Index n_ = 0;
};

Mat skeleton_inverse_apply(const Mat& pivot_block, const Mat& rhs);

}  // namespace aifmm
