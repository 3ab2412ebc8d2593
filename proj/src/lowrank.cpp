#include "aifmm/lowrank.hpp"

#include <algorithm>
#include <cmath>

namespace aifmm {

RRQRResult rrqr(const Mat& m, double eps) {
  if (!m.allFinite()) throw Error("non-finite input");
  const Index rows = m.rows();
  const Index cols = m.cols();
  RRQRResult out;
  if (rows == 0 || cols == 0 || m.squaredNorm() == 0.0) {
    out.Q = Mat(rows, 0);
    out.R = Mat(0, cols);
    return out;
  }

  Eigen::ColPivHouseholderQR<Mat> qr(m);
  const Mat& packed = qr.matrixQR();
  const Index kmax = std::min(rows, cols);

  // tail[k] = squared Frobenius norm of the trailing block R(k:, k:).
  std::vector<double> tail(kmax + 1, 0.0);
  for (Index k = kmax - 1; k >= 0; --k) tail[k] = tail[k + 1] + packed.row(k).tail(cols - k).squaredNorm();
  const double threshold = eps * eps * m.squaredNorm();
  Index rank = kmax;
  for (Index k = 0; k <= kmax; ++k) {
    if (tail[k] <= threshold) {
      rank = k;
      break;
    }
  }

  out.rank = rank;
  out.Q = Mat::Identity(rows, rank);
  qr.householderQ().applyThisOnTheLeft(out.Q);
  const Mat permuted = packed.topRows(rank).triangularView<Eigen::Upper>();
  const auto& idx = qr.colsPermutation().indices();
  out.R.resize(rank, cols);
  out.perm.resize(cols);
  for (Index j = 0; j < cols; ++j) {
    out.perm[j] = idx(j);
    out.R.col(idx(j)) = permuted.col(j);
  }
  return out;
}

namespace {

Index argmax_unused(const Vec& v, const std::vector<char>& used) {
  Index best = -1;
  double best_abs = -1.0;
  for (Index a = 0; a < v.size(); ++a) {
    if (used[a]) continue;
    const double x = std::abs(v(a));
    if (x > best_abs) {
      best_abs = x;
      best = a;
    }
  }
  return best;
}

}  // namespace

PivotSet aca_pivots(const EntryFn& entry, const IndexList& rows, const IndexList& cols, const AcaOptions& opts) {
  const auto m = static_cast<Index>(rows.size());
  const auto n = static_cast<Index>(cols.size());
  PivotSet out;
  if (m == 0 || n == 0) return out;
  Index max_rank = std::min(m, n);
  if (opts.max_rank >= 0) max_rank = std::min(max_rank, opts.max_rank);
  const Index min_rank = std::min(opts.min_rank, max_rank);

  std::vector<Vec> us;  // residual columns
  std::vector<Vec> vs;  // residual rows scaled by the pivot
  std::vector<char> row_used(m, 0), col_used(n, 0);

  auto residual_row = [&](Index i) {
    Vec r(n);
    for (Index j = 0; j < n; ++j) r(j) = entry(rows[i], cols[j]);
    for (std::size_t k = 0; k < us.size(); ++k) r -= us[k](i) * vs[k];
    return r;
  };
  auto residual_col = [&](Index j) {
    Vec c(m);
    for (Index i = 0; i < m; ++i) c(i) = entry(rows[i], cols[j]);
    for (std::size_t k = 0; k < us.size(); ++k) c -= vs[k](j) * us[k];
    return c;
  };

  // Starting row: largest entry of the first nonzero sampled column.
  Index i = -1;
  for (Index j = 0; j < n && i < 0; ++j) {
    const Vec c = residual_col(j);
    if (c.cwiseAbs().maxCoeff() > 0.0) c.cwiseAbs().maxCoeff(&i);
  }
  if (i < 0) return out;

  double norm2 = 0.0;
  double max_pivot = 0.0;
  int stale_rows = 0;
  while (static_cast<Index>(us.size()) < max_rank) {
    row_used[i] = 1;
    const Vec r = residual_row(i);
    const Index j = argmax_unused(r, col_used);
    const double pivot = j < 0 ? 0.0 : std::abs(r(j));
    if (j < 0 || pivot <= opts.eps * max_pivot * 1e-3 || pivot == 0.0) {
      // Row already reproduced; try a few other rows before declaring convergence.
      if (++stale_rows > 3) break;
      Index next = us.empty() ? -1 : argmax_unused(us.back(), row_used);
      if (next < 0) next = argmax_unused(Vec::Ones(m), row_used);
      if (next < 0) break;
      i = next;
      continue;
    }
    stale_rows = 0;

    const Vec v = r / r(j);
    const Vec u = residual_col(j);
    const double uv = u.norm() * v.norm();
    double cross = 0.0;
    for (std::size_t k = 0; k < us.size(); ++k) cross += (us[k].dot(u) * vs[k].dot(v)).real();
    const double next_norm2 = std::max(norm2 + 2.0 * cross + uv * uv, uv * uv);
    const bool converged = uv <= opts.eps * std::sqrt(next_norm2);
    const auto rank = static_cast<Index>(us.size());
    if (converged && (rank >= min_rank || pivot < 1e-12 * max_pivot)) break;

    us.push_back(u);
    vs.push_back(v);
    norm2 = next_norm2;
    max_pivot = std::max(max_pivot, pivot);
    col_used[j] = 1;
    out.rows.push_back(rows[i]);
    out.cols.push_back(cols[j]);

    const Index next = argmax_unused(u, row_used);
    if (next < 0) break;
    i = next;
  }
  return out;
}

SkeletonSolver::SkeletonSolver(const Mat& pivot_block) : n_(pivot_block.rows()) {
  if (pivot_block.rows() != pivot_block.cols()) throw Error("skeleton block must be square");
  if (n_ == 0) return;
  if (!pivot_block.allFinite()) throw Error("non-finite input");
  lu_.compute(pivot_block);
  const double scale = pivot_block.cwiseAbs().maxCoeff();
  const double smallest = lu_.matrixLU().diagonal().cwiseAbs().minCoeff();
  if (!(smallest >= 1e-14 * scale) || scale == 0.0) throw Error("singular skeleton");
}

Mat SkeletonSolver::solve(const Mat& rhs) const {
  if (rhs.rows() != n_) throw Error("dimension mismatch");
  if (n_ == 0) return Mat(0, rhs.cols());
  return lu_.solve(rhs);
}

Mat SkeletonSolver::right_solve(const Mat& lhs) const {
  if (lhs.cols() != n_) throw Error("dimension mismatch");
  if (n_ == 0) return Mat(lhs.rows(), 0);
  // lhs * A^-1 with P A = L U: solve U^T L^T P y = lhs^T.
  const Mat& packed = lu_.matrixLU();
  Mat y = packed.triangularView<Eigen::Upper>().transpose().solve(lhs.transpose());
  packed.triangularView<Eigen::UnitLower>().transpose().solveInPlace(y);
  return (lu_.permutationP().transpose() * y).transpose();
}

Mat skeleton_inverse_apply(const Mat& pivot_block, const Mat& rhs) {
  return SkeletonSolver(pivot_block).solve(rhs);
}

}  // namespace aifmm
