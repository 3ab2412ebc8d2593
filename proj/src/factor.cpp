#include "aifmm/factor.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <ostream>
#include <string>

#include "aifmm/lowrank.hpp"

namespace aifmm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Mat hcat(const Mat& a, const Mat& b) {
  Mat out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

double relative_gap(const Mat& before, const Mat& after) {
  const double scale = before.norm();
  const double diff = (after - before).norm();
  return scale > 0.0 ? diff / scale : diff;
}

// Orthonormal basis Q (m x target) whose first columns span `basis`, plus the coefficients
// C (target x r) with basis = Q * C. Extra directions are taken from `guide` where possible.
std::pair<Mat, Mat> extend_basis(const Mat& basis, const Mat& guide, Index target) {
  const Index m = basis.rows();
  const Index r = basis.cols();
  Eigen::HouseholderQR<Mat> qr(basis);
  const Mat full_q = qr.householderQ() * Mat::Identity(m, m);
  Mat coeff = Mat::Zero(target, r);
  coeff.topRows(r) = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();

  const Mat complement = full_q.rightCols(m - r);
  const Mat projected = complement.adjoint() * guide;
  Mat pick;
  if (projected.size() > 0 && projected.norm() > 0.0) {
    Eigen::ColPivHouseholderQR<Mat> cp(projected);
    pick = cp.householderQ() * Mat::Identity(m - r, target - r);
  } else {
    pick = Mat::Identity(m - r, target - r);
  }
  Mat q(m, target);
  q << full_q.leftCols(r), complement * pick;
  return {q, coeff};
}

}  // namespace

const char* fill_kind_name(FillKind kind) {
  switch (kind) {
    case FillKind::P2P: return "P2P";
    case FillKind::P2L: return "P2L";
    case FillKind::M2P: return "M2P";
    case FillKind::M2L: return "M2L";
  }
  return "?";
}

void FactorStats::write_level_csv(std::ostream& out) const {
  out << "level,max_rank,fill_blocks,compressions,rrqr_calls,padded_nodes,seconds\n";
  for (const auto& s : levels)
    out << s.level << ',' << s.max_rank << ',' << s.fill_blocks << ',' << s.compressions << ',' << s.rrqr_calls
        << ',' << s.padded_nodes << ',' << s.seconds << '\n';
}

double Factorization::checksum() const {
  double sum = 0.0;
  double w = 1.0;
  auto mix = [&](const Mat& m) {
    for (Index k = 0; k < m.size(); ++k) {
      sum += w * std::abs(m.data()[k]);
      w = w * 1.000001 + 1e-9;
    }
  };
  for (const auto& rec : records) {
    mix(rec.lu.matrixLU());
    for (const auto& parts : rec.row_couplings)
      for (const auto& p : parts) mix(p.block);
    for (const auto& parts : rec.col_couplings)
      for (const auto& p : parts) mix(p.block);
  }
  if (root_dim > 0) mix(root_lu.matrixLU());
  return sum;
}

Eliminator::Eliminator(const Tree& tree, ExtendedSystem& sys, FactorOptions opts)
    : tree_(tree), sys_(sys), opts_(opts) {
  if (!(opts_.eps > 0.0 && opts_.eps < 1.0)) throw Error("eps must lie in (0, 1)");
  if (sys_.depth() != tree_.depth) throw Error("extended system does not match the tree");
  eliminated_.resize(tree_.depth + 1);
  for (int l = 0; l <= tree_.depth; ++l) eliminated_[l].assign(tree_.nodes_at(l), 0);
  stats_.max_rank = sys_.max_rank();
}

LevelStats& Eliminator::level_stats(int level) {
  auto it = std::find_if(stats_.levels.begin(), stats_.levels.end(),
                         [level](const LevelStats& s) { return s.level == level; });
  if (it != stats_.levels.end()) return *it;
  stats_.levels.push_back({});
  stats_.levels.back().level = level;
  return stats_.levels.back();
}

void Eliminator::note_rank(Index r) { stats_.max_rank = std::max(stats_.max_rank, r); }

void Eliminator::note_pair(int kind, int level, Index a, Index b) {
  Index& count = pair_compressions_[{kind, level, a, b}];
  if (count++ == 0) ++stats_.compressed_pairs;
  stats_.max_compressions_per_pair = std::max(stats_.max_compressions_per_pair, count);
}

void Eliminator::transform_local_row(int level, Index i, const Mat& left, BlockId skip_col) {
  const BlockId z = sys_.local_id(level, i);
  for (auto& [c, blk] : sys_.row(z)) {
    if (c == z || c == skip_col) continue;
    blk = left * blk;
  }
}

void Eliminator::transform_multipole_col(int level, Index j, const Mat& right_adjoint, BlockId skip_row) {
  const BlockId y = sys_.multipole_id(level, j);
  for (BlockId r : sys_.col(y)) {
    if (r == y || r == skip_row) continue;
    Mat* blk = sys_.find(r, y);
    *blk = *blk * right_adjoint;
  }
}

void Eliminator::replace_incoming(int level, Index i, const Mat& basis) {
  const BlockId z = sys_.local_id(level, i);
  const Index k = basis.cols();
  sys_.erase(z, z);
  sys_.set_rank_in(level, i, k);
  sys_.set(z, z, -Mat::Identity(k, k));
  sys_.scatter(sys_.particle_rows(level, i), {z}, basis);
  note_rank(k);
}

void Eliminator::replace_outgoing(int level, Index j, const Mat& basis) {
  const BlockId y = sys_.multipole_id(level, j);
  const Index k = basis.cols();
  sys_.erase(y, y);
  sys_.set_rank_out(level, j, k);
  sys_.set(y, y, -Mat::Identity(k, k));
  sys_.scatter({y}, sys_.particle_cols(level, j), basis.adjoint());
  note_rank(k);
}

void Eliminator::sample_fill_rank(Index i, Index j, const Mat& fill) {
  if (fill.size() == 0) return;
  Eigen::JacobiSVD<Mat> svd(fill);
  const auto& s = svd.singularValues();
  Index rank = 0;
  for (Index k = 0; k < s.size(); ++k)
    if (s(k) > opts_.fill_rank_tol * s(0)) ++rank;
  stats_.fill_ranks.push_back({i, j, rank, fill.rows(), fill.cols()});
}

void Eliminator::compress_redirect_p2p(int level, Index i, Index j) {
  if (eliminated(level, i) || eliminated(level, j)) throw Error("P2P compression needs two active nodes");
  const auto rows = sys_.particle_rows(level, i);
  const auto cols = sys_.particle_cols(level, j);
  const BlockId zi = sys_.local_id(level, i);
  const BlockId yj = sys_.multipole_id(level, j);

  const Mat fill = sys_.gather(rows, cols);
  if (opts_.record_fill_ranks && level == tree_.depth) sample_fill_rank(i, j, fill);
  const Mat u = sys_.gather(rows, {zi});
  const Mat vh = sys_.gather({yj}, cols);
  const Mat a = sys_.gather({zi}, {yj});
  const Index ri = u.cols();
  const Index rj = vh.rows();

  const RRQRResult left = rrqr(hcat(u, fill), opts_.eps);
  const Mat l_old = left.R.leftCols(ri);
  const Mat l_fill = left.R.rightCols(fill.cols());
  const RRQRResult right = rrqr(hcat(vh.adjoint(), l_fill.adjoint()), opts_.eps);
  const Mat r_old = right.R.leftCols(rj);
  const Mat r_fill = right.R.rightCols(left.rank);
  stats_.rrqr_calls += 2;
  level_stats(level).rrqr_calls += 2;

  const Mat a_new = l_old * a * r_old.adjoint() + r_fill.adjoint();
  if (opts_.check_compressions) {
    const Mat before = u * a * vh + fill;
    const Mat after = left.Q * a_new * right.Q.adjoint();
    stats_.checks.push_back({FillKind::P2P, level, i, j, relative_gap(before, after)});
  }

  transform_local_row(level, i, l_old, yj);
  transform_multipole_col(level, j, r_old.adjoint(), zi);
  replace_incoming(level, i, left.Q);
  replace_outgoing(level, j, right.Q);
  sys_.set(zi, yj, a_new);
  for (BlockId r : rows)
    for (BlockId c : cols) sys_.erase(r, c);
  ++stats_.compress_p2p;
  ++level_stats(level).compressions;
}

void Eliminator::compress_redirect_p2l(int level, Index i, Index j) {
  if (!eliminated(level, i) || eliminated(level, j)) throw Error("P2L compression needs an eliminated target");
  const auto cols = sys_.particle_cols(level, j);
  const BlockId zi = sys_.local_id(level, i);
  const BlockId yj = sys_.multipole_id(level, j);

  const Mat fill = sys_.gather({zi}, cols);
  const Mat vh = sys_.gather({yj}, cols);
  const Mat a = sys_.gather({zi}, {yj});
  const Index rj = vh.rows();

  const RRQRResult right = rrqr(hcat(vh.adjoint(), fill.adjoint()), opts_.eps);
  const Mat r_old = right.R.leftCols(rj);
  const Mat r_fill = right.R.rightCols(fill.rows());
  ++stats_.rrqr_calls;
  ++level_stats(level).rrqr_calls;

  const Mat a_new = a * r_old.adjoint() + r_fill.adjoint();
  if (opts_.check_compressions) {
    const Mat before = a * vh + fill;
    const Mat after = a_new * right.Q.adjoint();
    stats_.checks.push_back({FillKind::P2L, level, i, j, relative_gap(before, after)});
  }

  transform_multipole_col(level, j, r_old.adjoint(), zi);
  replace_outgoing(level, j, right.Q);
  sys_.set(zi, yj, a_new);
  for (BlockId c : cols) sys_.erase(zi, c);
  ++stats_.compress_p2l;
  ++level_stats(level).compressions;
}

void Eliminator::compress_redirect_m2p(int level, Index i, Index j) {
  if (eliminated(level, i) || !eliminated(level, j)) throw Error("M2P compression needs an eliminated source");
  const auto rows = sys_.particle_rows(level, i);
  const BlockId zi = sys_.local_id(level, i);
  const BlockId yj = sys_.multipole_id(level, j);

  const Mat fill = sys_.gather(rows, {yj});
  const Mat u = sys_.gather(rows, {zi});
  const Mat a = sys_.gather({zi}, {yj});
  const Index ri = u.cols();

  const RRQRResult left = rrqr(hcat(u, fill), opts_.eps);
  const Mat l_old = left.R.leftCols(ri);
  const Mat l_fill = left.R.rightCols(fill.cols());
  ++stats_.rrqr_calls;
  ++level_stats(level).rrqr_calls;

  const Mat a_new = l_old * a + l_fill;
  if (opts_.check_compressions) {
    const Mat before = u * a + fill;
    const Mat after = left.Q * a_new;
    stats_.checks.push_back({FillKind::M2P, level, i, j, relative_gap(before, after)});
  }

  transform_local_row(level, i, l_old, yj);
  replace_incoming(level, i, left.Q);
  sys_.set(zi, yj, a_new);
  for (BlockId r : rows) sys_.erase(r, yj);
  ++stats_.compress_m2p;
  ++level_stats(level).compressions;
}

void Eliminator::equalize_ranks(int level, Index i) {
  if (eliminated(level, i)) throw Error("cannot change the bases of an eliminated node");
  const BlockId z = sys_.local_id(level, i);
  const BlockId y = sys_.multipole_id(level, i);
  const Index r_in = sys_.col_dim(z);
  const Index r_out = sys_.col_dim(y);
  if (r_in == r_out) return;
  const auto rows = sys_.particle_rows(level, i);
  const auto cols = sys_.particle_cols(level, i);
  const Index m = sys_.group_rows(rows);
  const Index n = sys_.group_cols(cols);
  const Index target = std::max(r_in, r_out);
  if (target > m || target > n)
    throw Error("cannot equalize ranks at level " + std::to_string(level) + " node " + std::to_string(i));

  const Mat u = sys_.gather(rows, {z});
  const Mat v = sys_.gather({y}, cols).adjoint();
  if (r_in < r_out) {
    const Mat guide = m == n ? v : Mat::Identity(m, m);
    const auto [basis, coeff] = extend_basis(u, guide, target);
    transform_local_row(level, i, coeff, -1);
    replace_incoming(level, i, basis);
  } else {
    const Mat guide = m == n ? u : Mat::Identity(n, n);
    const auto [basis, coeff] = extend_basis(v, guide, target);
    transform_multipole_col(level, i, coeff.adjoint(), -1);
    replace_outgoing(level, i, basis);
  }
  ++stats_.padded_nodes;
  ++level_stats(level).padded_nodes;
}

void Eliminator::eliminate_node(int level, Index i) {
  if (eliminated(level, i)) throw Error("node already eliminated");
  equalize_ranks(level, i);

  auto rows = sys_.particle_rows(level, i);
  rows.push_back(sys_.multipole_id(level, i));
  auto cols = sys_.particle_cols(level, i);
  cols.push_back(sys_.local_id(level, i));
  const Index m = sys_.group_rows(rows);
  if (m != sys_.group_cols(cols))
    throw Error("pivot failure at node " + std::to_string(i) + " on level " + std::to_string(level) +
                ": local system is not square");
  eliminated_[level][i] = 1;
  if (m == 0) return;

  EliminationRecord rec;
  rec.level = level;
  rec.node = i;
  rec.pivot_dim = m;
  const Mat pivot = sys_.gather(rows, cols);
  rec.lu.compute(pivot);
  const double scale = pivot.cwiseAbs().maxCoeff();
  if (!(rec.lu.matrixLU().diagonal().cwiseAbs().minCoeff() >= 1e-14 * scale) || scale == 0.0)
    throw Error("pivot failure at node " + std::to_string(i) + " on level " + std::to_string(level));

  std::map<BlockId, Index> row_offset, col_offset;
  for (Index off = 0; BlockId r : rows) {
    row_offset[r] = off;
    off += sys_.row_dim(r);
  }
  for (Index off = 0; BlockId c : cols) {
    col_offset[c] = off;
    off += sys_.col_dim(c);
  }

  std::set<BlockId> coupled_rows;
  for (BlockId c : cols)
    for (BlockId r : sys_.col(c))
      if (!row_offset.count(r)) coupled_rows.insert(r);
  std::set<BlockId> coupled_cols;
  for (BlockId r : rows)
    for (const auto& entry : sys_.row(r))
      if (!col_offset.count(entry.first)) coupled_cols.insert(entry.first);

  for (BlockId r : coupled_rows) {
    std::vector<PivotBlock> parts;
    for (auto& [c, blk] : sys_.row(r))
      if (auto it = col_offset.find(c); it != col_offset.end()) parts.push_back({it->second, std::move(blk)});
    rec.coupled_rows.push_back(r);
    rec.row_couplings.push_back(std::move(parts));
  }
  Index width = 0;
  std::vector<Index> coupled_offset;
  for (BlockId c : coupled_cols) {
    std::vector<PivotBlock> parts;
    for (BlockId r : sys_.col(c))
      if (auto it = row_offset.find(r); it != row_offset.end()) parts.push_back({it->second, std::move(*sys_.find(r, c))});
    rec.coupled_cols.push_back(c);
    rec.col_couplings.push_back(std::move(parts));
    coupled_offset.push_back(width);
    width += sys_.col_dim(c);
  }
  for (BlockId r : rows) sys_.erase_row(r);
  for (BlockId c : cols) sys_.erase_col(c);

  // Schur complement: every coupled (row, column) pair receives -A_r * M^-1 * B_c.
  Mat coupled_block = Mat::Zero(m, width);
  for (std::size_t b = 0; b < rec.coupled_cols.size(); ++b)
    for (const auto& part : rec.col_couplings[b])
      coupled_block.block(part.offset, coupled_offset[b], part.block.rows(), part.block.cols()) = part.block;
  const Mat solved = rec.lu.solve(coupled_block);

  Index created = 0;
  for (std::size_t a = 0; a < rec.coupled_rows.size(); ++a) {
    const BlockId r = rec.coupled_rows[a];
    Mat update = Mat::Zero(sys_.row_dim(r), width);
    for (const auto& part : rec.row_couplings[a])
      update.noalias() -= part.block * solved.middleRows(part.offset, part.block.cols());
    for (std::size_t b = 0; b < rec.coupled_cols.size(); ++b) {
      const BlockId c = rec.coupled_cols[b];
      const auto piece = update.middleCols(coupled_offset[b], sys_.col_dim(c));
      if (Mat* blk = sys_.find(r, c)) {
        *blk += piece;
      } else {
        sys_.set(r, c, piece);
        ++created;
      }
    }
  }
  level_stats(level).fill_blocks += created;
  rec.pivot_rows = std::move(rows);
  rec.pivot_cols = std::move(cols);
  records_.push_back(std::move(rec));
}

void Eliminator::compress_p2p_pair(int level, Index p, Index q) {
  note_pair(0, level, std::min(p, q), std::max(p, q));
  compress_redirect_p2p(level, p, q);
  compress_redirect_p2p(level, q, p);
}

void Eliminator::compress_p2l_pair(int level, Index eliminated_node, Index other) {
  note_pair(1, level, eliminated_node, other);
  compress_redirect_p2l(level, eliminated_node, other);
  compress_redirect_m2p(level, other, eliminated_node);
}

void Eliminator::handle_fill(int level, Index i) {
  const auto& nb = tree_.node(level, i).neighbors;
  for (Index p : nb) {
    if (p == i) continue;
    for (Index q : nb) {
      if (q == i || q == p || !tree_.in_interaction_list(level, p, q)) continue;
      const bool ep = eliminated(level, p);
      const bool eq = eliminated(level, q);
      if (!ep && !eq && p < q) {
        const bool fill = sys_.any_block(sys_.particle_rows(level, p), sys_.particle_cols(level, q)) ||
                          sys_.any_block(sys_.particle_rows(level, q), sys_.particle_cols(level, p));
        if (!fill) continue;
        if (opts_.strategy == Strategy::naive)
          compress_p2p_pair(level, p, q);
        else
          pending_p2p_.insert({p, q});
      } else if (ep && !eq) {
        const BlockId zp = sys_.local_id(level, p);
        const BlockId yp = sys_.multipole_id(level, p);
        const bool fill = sys_.any_block({zp}, sys_.particle_cols(level, q)) ||
                          sys_.any_block(sys_.particle_rows(level, q), {yp});
        if (!fill) continue;
        if (opts_.strategy == Strategy::naive)
          compress_p2l_pair(level, p, q);
        else
          pending_p2l_.insert({p, q});
      }
    }
  }
}

void Eliminator::compress_pending(int level, Index i) {
  for (auto it = pending_p2p_.begin(); it != pending_p2p_.end();) {
    if (it->first == i || it->second == i) {
      compress_p2p_pair(level, it->first, it->second);
      it = pending_p2p_.erase(it);
    } else {
      ++it;
    }
  }
  for (auto it = pending_p2l_.begin(); it != pending_p2l_.end();) {
    if (it->first == i) throw Error("pending P2L pair starts with a node that is not yet eliminated");
    if (it->second == i) {
      compress_p2l_pair(level, it->first, it->second);
      it = pending_p2l_.erase(it);
    } else {
      ++it;
    }
  }
}

void Eliminator::run_level(int level) {
  const auto t0 = Clock::now();
  const Index start_rank = stats_.max_rank;
  for (Index i = 0; i < tree_.nodes_at(level); ++i) {
    if (opts_.strategy == Strategy::efficient) compress_pending(level, i);
    eliminate_node(level, i);
    handle_fill(level, i);
  }
  if (!pending_p2p_.empty() || !pending_p2l_.empty()) throw Error("unprocessed fill-ins at end of level");
  auto& ls = level_stats(level);
  ls.seconds = seconds_since(t0);
  ls.max_rank = std::max(start_rank, stats_.max_rank);
  if (opts_.check_sparsity) stats_.sparsity_violations += count_sparsity_violations();
}

Index Eliminator::count_sparsity_violations() const {
  using K = SlotKind;
  Index bad = 0;
  auto near = [&](int l, Index a, Index b) { return tree_.is_neighbor(l, a, b); };
  auto near_or_far = [&](int l, Index a, Index b) {
    return tree_.is_neighbor(l, a, b) || tree_.in_interaction_list(l, a, b);
  };
  for (std::size_t rid = 0; rid < sys_.slot_count(); ++rid) {
    const Slot& a = sys_.slot(static_cast<BlockId>(rid));
    for (const auto& entry : sys_.row(static_cast<BlockId>(rid))) {
      const Slot& b = sys_.slot(entry.first);
      bool ok = false;
      if (a.level == b.level) {
        const int l = a.level;
        if (a.kind == K::local && b.kind == K::multipole)
          ok = near_or_far(l, a.node, b.node);
        else if ((a.kind == K::particle && b.kind == K::particle) ||
                 (a.kind == K::particle && b.kind == K::multipole) || (a.kind == K::local && b.kind == K::particle))
          ok = near(l, a.node, b.node);
        else if ((a.kind == K::particle && b.kind == K::local) || (a.kind == K::multipole && b.kind == K::particle) ||
                 (a.kind == K::multipole && b.kind == K::multipole) || (a.kind == K::local && b.kind == K::local))
          ok = a.node == b.node;
      } else if (std::abs(a.level - b.level) == 1) {
        const bool row_finer = a.level > b.level;
        const Slot& fine = row_finer ? a : b;
        const Slot& coarse = row_finer ? b : a;
        const Index lifted = *tree_.node(fine.level, fine.node).parent;
        if ((a.kind == K::local && b.kind == K::local && row_finer) ||
            (a.kind == K::multipole && b.kind == K::multipole && !row_finer))
          ok = lifted == coarse.node;
        else if (a.kind == K::local && b.kind == K::multipole)
          ok = near(coarse.level, lifted, coarse.node);
      }
      if (!ok) ++bad;
    }
  }
  return bad;
}

Factorization Eliminator::finish() {
  for (int l = 2; l <= tree_.depth; ++l)
    for (Index i = 0; i < tree_.nodes_at(l); ++i)
      if (!eliminated(l, i)) throw Error("factorization finished before all nodes were eliminated");

  Factorization f;
  f.n = sys_.size_n();
  f.depth = tree_.depth;
  f.eps = opts_.eps;
  f.strategy = opts_.strategy;
  for (Index i = 0; i < tree_.nodes_at(tree_.depth); ++i) {
    f.leaf_targets.push_back(sys_.leaf_targets(i));
    f.leaf_sources.push_back(sys_.leaf_sources(i));
  }
  f.row_dim.resize(sys_.slot_count());
  f.col_dim.resize(sys_.slot_count());
  for (std::size_t id = 0; id < sys_.slot_count(); ++id) {
    f.row_dim[id] = sys_.row_dim(static_cast<BlockId>(id));
    f.col_dim[id] = sys_.col_dim(static_cast<BlockId>(id));
  }
  for (Index i = 0; i < tree_.nodes_at(2); ++i) {
    f.root_rows.push_back(sys_.local_id(2, i));
    f.root_cols.push_back(sys_.multipole_id(2, i));
  }
  f.root_dim = sys_.group_rows(f.root_rows);
  if (f.root_dim != sys_.group_cols(f.root_cols)) throw Error("reduced level-2 system is not square");
  if (f.root_dim > 0) {
    const Mat root = sys_.gather(f.root_rows, f.root_cols);
    f.root_lu.compute(root);
    const double scale = root.cwiseAbs().maxCoeff();
    if (!(f.root_lu.matrixLU().diagonal().cwiseAbs().minCoeff() >= 1e-14 * scale) || scale == 0.0)
      throw Error("singular reduced system");
  }
  f.records = std::move(records_);
  f.stats = stats_;
  return f;
}

Factorization factorize(const Tree& tree, OperatorSet ops, const FactorOptions& opts) {
  const auto t0 = Clock::now();
  ExtendedSystem sys(tree, std::move(ops));
  Eliminator el(tree, sys, opts);
  for (int l = tree.depth; l >= 2; --l) el.run_level(l);
  Factorization f = el.finish();
  f.stats.seconds = seconds_since(t0);
  return f;
}

Factorization factorize_naive(const Tree& tree, const OperatorSet& ops, double eps) {
  FactorOptions opts;
  opts.eps = eps;
  opts.strategy = Strategy::naive;
  return factorize(tree, ops, opts);
}

Factorization factorize_efficient(const Tree& tree, const OperatorSet& ops, double eps) {
  FactorOptions opts;
  opts.eps = eps;
  opts.strategy = Strategy::efficient;
  return factorize(tree, ops, opts);
}

}  // namespace aifmm
