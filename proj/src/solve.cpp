#include "aifmm/solve.hpp"

namespace aifmm {

namespace {

Mat stack(const std::vector<Mat>& parts, const std::vector<BlockId>& ids, const std::vector<Index>& dims,
          Index width) {
  Index total = 0;
  for (BlockId id : ids) total += dims[id];
  Mat out = Mat::Zero(total, width);
  Index off = 0;
  for (BlockId id : ids) {
    if (parts[id].size() > 0) out.middleRows(off, dims[id]) = parts[id];
    off += dims[id];
  }
  return out;
}

void unstack(std::vector<Mat>& parts, const std::vector<BlockId>& ids, const std::vector<Index>& dims,
             const Mat& values) {
  Index off = 0;
  for (BlockId id : ids) {
    parts[id] = values.middleRows(off, dims[id]);
    off += dims[id];
  }
}

}  // namespace

Mat solve(const Factorization& fact, const Mat& b) {
  if (b.rows() != fact.n) throw Error("dimension mismatch");
  if (!b.allFinite()) throw Error("non-finite input");
  const Index k = b.cols();
  const std::size_t slots = fact.row_dim.size();

  std::vector<Mat> rhs(slots);
  for (std::size_t leaf = 0; leaf < fact.leaf_targets.size(); ++leaf) {
    const auto& t = fact.leaf_targets[leaf];
    Mat seg(static_cast<Index>(t.size()), k);
    for (std::size_t a = 0; a < t.size(); ++a) seg.row(static_cast<Index>(a)) = b.row(t[a]);
    rhs[leaf] = std::move(seg);
  }

  // Forward replay of the Schur updates; the pivot right-hand sides are kept for back substitution.
  std::vector<Mat> pivot_rhs(fact.records.size());
  for (std::size_t e = 0; e < fact.records.size(); ++e) {
    const auto& rec = fact.records[e];
    pivot_rhs[e] = stack(rhs, rec.pivot_rows, fact.row_dim, k);
    if (rec.coupled_rows.empty()) continue;
    const Mat t = rec.lu.solve(pivot_rhs[e]);
    for (std::size_t a = 0; a < rec.coupled_rows.size(); ++a) {
      Mat& target = rhs[rec.coupled_rows[a]];
      if (target.size() == 0) target = Mat::Zero(fact.row_dim[rec.coupled_rows[a]], k);
      for (const auto& part : rec.row_couplings[a])
        target.noalias() -= part.block * t.middleRows(part.offset, part.block.cols());
    }
  }

  std::vector<Mat> sol(slots);
  if (fact.root_dim > 0)
    unstack(sol, fact.root_cols, fact.col_dim, fact.root_lu.solve(stack(rhs, fact.root_rows, fact.row_dim, k)));
  else
    for (BlockId c : fact.root_cols) sol[c] = Mat::Zero(fact.col_dim[c], k);

  // Back substitution in reverse elimination order.
  for (std::size_t e = fact.records.size(); e-- > 0;) {
    const auto& rec = fact.records[e];
    Mat v = std::move(pivot_rhs[e]);
    for (std::size_t a = 0; a < rec.coupled_cols.size(); ++a) {
      const Mat& known = sol[rec.coupled_cols[a]];
      if (known.size() == 0) continue;
      for (const auto& part : rec.col_couplings[a])
        v.middleRows(part.offset, part.block.rows()).noalias() -= part.block * known;
    }
    if (rec.pivot_dim > 0) v = rec.lu.solve(v);
    unstack(sol, rec.pivot_cols, fact.col_dim, v);
  }

  Mat x = Mat::Zero(fact.n, k);
  for (std::size_t leaf = 0; leaf < fact.leaf_sources.size(); ++leaf) {
    const auto& s = fact.leaf_sources[leaf];
    if (s.empty()) continue;
    for (std::size_t a = 0; a < s.size(); ++a) x.row(s[a]) = sol[leaf].row(static_cast<Index>(a));
  }
  return x;
}

Vec solve(const Factorization& fact, const Vec& b) {
  const Mat x = solve(fact, Mat(b));
  return x.col(0);
}

}  // namespace aifmm
