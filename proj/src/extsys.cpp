#include "aifmm/extsys.hpp"

#include <algorithm>
#include <ostream>
#include <string>

namespace aifmm {

ExtendedSystem::ExtendedSystem(const Tree& tree, OperatorSet ops)
    : depth_(tree.depth), n_(ops.n), children_(tree.children_per_node()) {
  if (ops.depth != tree.depth || static_cast<int>(ops.levels.size()) != tree.depth + 1)
    throw Error("operator set does not match the tree");
  const int depth = tree.depth;
  const Index leaves = tree.nodes_at(depth);

  for (Index i = 0; i < leaves; ++i) slots_.push_back({SlotKind::particle, depth, i});
  multipole_offset_.assign(depth + 1, -1);
  local_offset_.assign(depth + 1, -1);
  for (int l = 2; l <= depth; ++l) {
    multipole_offset_[l] = static_cast<Index>(slots_.size());
    for (Index i = 0; i < tree.nodes_at(l); ++i) slots_.push_back({SlotKind::multipole, l, i});
    local_offset_[l] = static_cast<Index>(slots_.size());
    for (Index i = 0; i < tree.nodes_at(l); ++i) slots_.push_back({SlotKind::local, l, i});
  }
  const std::size_t ns = slots_.size();
  row_dim_.assign(ns, 0);
  col_dim_.assign(ns, 0);
  by_row_.resize(ns);
  by_col_.resize(ns);

  leaf_targets_.resize(leaves);
  leaf_sources_.resize(leaves);
  for (Index i = 0; i < leaves; ++i) {
    const auto& node = tree.node(depth, i);
    leaf_targets_[i] = node.t_idx;
    leaf_sources_[i] = node.s_idx;
    row_dim_[particle_id(i)] = static_cast<Index>(node.t_idx.size());
    col_dim_[particle_id(i)] = static_cast<Index>(node.s_idx.size());
  }
  for (int l = 2; l <= depth; ++l) {
    for (Index i = 0; i < tree.nodes_at(l); ++i) {
      const auto& op = ops.at(l, i);
      row_dim_[multipole_id(l, i)] = col_dim_[multipole_id(l, i)] = op.rank_out;
      row_dim_[local_id(l, i)] = col_dim_[local_id(l, i)] = op.rank_in;
    }
  }

  for (int l = 2; l <= depth; ++l) {
    for (Index i = 0; i < tree.nodes_at(l); ++i) {
      auto& op = ops.levels[l][i];
      const BlockId y = multipole_id(l, i);
      const BlockId z = local_id(l, i);
      set(y, y, -Mat::Identity(op.rank_out, op.rank_out));
      set(z, z, -Mat::Identity(op.rank_in, op.rank_in));
      if (l == depth) {
        set(particle_id(i), z, std::move(op.l2p));
        set(y, particle_id(i), std::move(op.p2m));
        for (auto& [j, k] : op.p2p) set(particle_id(i), particle_id(j), std::move(k));
      }
      if (l >= 3) {
        const Index parent = *tree.node(l, i).parent;
        set(z, local_id(l - 1, parent), std::move(op.l2l));
        set(multipole_id(l - 1, parent), y, std::move(op.m2m));
      }
      for (auto& [j, a] : op.m2l) set(z, multipole_id(l, j), std::move(a));
    }
  }
}

std::vector<BlockId> ExtendedSystem::particle_rows(int level, Index i) const {
  if (level == depth_) return {particle_id(i)};
  std::vector<BlockId> out;
  out.reserve(children_);
  for (Index c = 0; c < children_; ++c) out.push_back(local_id(level + 1, i * children_ + c));
  return out;
}

std::vector<BlockId> ExtendedSystem::particle_cols(int level, Index i) const {
  if (level == depth_) return {particle_id(i)};
  std::vector<BlockId> out;
  out.reserve(children_);
  for (Index c = 0; c < children_; ++c) out.push_back(multipole_id(level + 1, i * children_ + c));
  return out;
}

Index ExtendedSystem::group_rows(const std::vector<BlockId>& ids) const {
  Index s = 0;
  for (BlockId id : ids) s += row_dim_[id];
  return s;
}

Index ExtendedSystem::group_cols(const std::vector<BlockId>& ids) const {
  Index s = 0;
  for (BlockId id : ids) s += col_dim_[id];
  return s;
}

void ExtendedSystem::set_rank_in(int level, Index i, Index r) {
  row_dim_[local_id(level, i)] = col_dim_[local_id(level, i)] = r;
}

void ExtendedSystem::set_rank_out(int level, Index i, Index r) {
  row_dim_[multipole_id(level, i)] = col_dim_[multipole_id(level, i)] = r;
}

const Mat* ExtendedSystem::find(BlockId r, BlockId c) const {
  auto it = by_row_[r].find(c);
  return it == by_row_[r].end() ? nullptr : &it->second;
}

Mat* ExtendedSystem::find(BlockId r, BlockId c) {
  auto it = by_row_[r].find(c);
  return it == by_row_[r].end() ? nullptr : &it->second;
}

void ExtendedSystem::set(BlockId r, BlockId c, Mat block) {
  if (block.rows() != row_dim_[r] || block.cols() != col_dim_[c])
    throw Error("block dimension mismatch at (" + std::to_string(r) + ", " + std::to_string(c) + ")");
  if (block.size() == 0) {
    erase(r, c);
    return;
  }
  by_row_[r][c] = std::move(block);
  by_col_[c].insert(r);
}

void ExtendedSystem::add(BlockId r, BlockId c, const Mat& block) {
  if (Mat* b = find(r, c)) {
    if (b->rows() != block.rows() || b->cols() != block.cols()) throw Error("block dimension mismatch");
    *b += block;
  } else {
    set(r, c, block);
  }
}

void ExtendedSystem::erase(BlockId r, BlockId c) {
  by_row_[r].erase(c);
  by_col_[c].erase(r);
}

void ExtendedSystem::erase_row(BlockId r) {
  for (const auto& [c, b] : by_row_[r]) by_col_[c].erase(r);
  by_row_[r].clear();
}

void ExtendedSystem::erase_col(BlockId c) {
  for (BlockId r : by_col_[c]) by_row_[r].erase(c);
  by_col_[c].clear();
}

Mat ExtendedSystem::gather(const std::vector<BlockId>& rows, const std::vector<BlockId>& cols) const {
  Mat out = Mat::Zero(group_rows(rows), group_cols(cols));
  Index ro = 0;
  for (BlockId r : rows) {
    Index co = 0;
    for (BlockId c : cols) {
      if (const Mat* b = find(r, c)) out.block(ro, co, b->rows(), b->cols()) = *b;
      co += col_dim_[c];
    }
    ro += row_dim_[r];
  }
  return out;
}

void ExtendedSystem::scatter(const std::vector<BlockId>& rows, const std::vector<BlockId>& cols, const Mat& m) {
  if (m.rows() != group_rows(rows) || m.cols() != group_cols(cols)) throw Error("scatter dimension mismatch");
  Index ro = 0;
  for (BlockId r : rows) {
    Index co = 0;
    for (BlockId c : cols) {
      set(r, c, m.block(ro, co, row_dim_[r], col_dim_[c]));
      co += col_dim_[c];
    }
    ro += row_dim_[r];
  }
}

bool ExtendedSystem::any_block(const std::vector<BlockId>& rows, const std::vector<BlockId>& cols) const {
  for (BlockId r : rows)
    for (BlockId c : cols)
      if (find(r, c)) return true;
  return false;
}

std::size_t ExtendedSystem::block_count() const {
  std::size_t n = 0;
  for (const auto& r : by_row_) n += r.size();
  return n;
}

Index ExtendedSystem::max_rank() const {
  Index r = 0;
  for (std::size_t id = 0; id < slots_.size(); ++id)
    if (slots_[id].kind != SlotKind::particle) r = std::max(r, col_dim_[id]);
  return r;
}

std::vector<BlockId> ExtendedSystem::row_order() const {
  std::vector<BlockId> out;
  for (int l = depth_; l >= 2; --l) {
    const Index nodes = local_offset_[l] - multipole_offset_[l];
    for (Index i = 0; i < nodes; ++i) {
      for (BlockId id : particle_rows(l, i)) out.push_back(id);
      out.push_back(multipole_id(l, i));
    }
  }
  const Index level2 = local_offset_[2] - multipole_offset_[2];
  for (Index i = 0; i < level2; ++i) out.push_back(local_id(2, i));
  return out;
}

std::vector<BlockId> ExtendedSystem::col_order() const {
  std::vector<BlockId> out;
  for (int l = depth_; l >= 2; --l) {
    const Index nodes = local_offset_[l] - multipole_offset_[l];
    for (Index i = 0; i < nodes; ++i) {
      for (BlockId id : particle_cols(l, i)) out.push_back(id);
      out.push_back(local_id(l, i));
    }
  }
  const Index level2 = local_offset_[2] - multipole_offset_[2];
  for (Index i = 0; i < level2; ++i) out.push_back(multipole_id(2, i));
  return out;
}

Index ExtendedSystem::total_dim() const {
  Index s = 0;
  for (BlockId id : row_order()) s += row_dim_[id];
  return s;
}

ExtendedSystem build_extended_system(const Tree& tree, OperatorSet ops) { return {tree, std::move(ops)}; }

DenseExtended densify(const ExtendedSystem& sys, const Vec& b, Index cap) {
  if (b.size() != sys.size_n()) throw Error("dimension mismatch");
  const auto rows = sys.row_order();
  const auto cols = sys.col_order();
  DenseExtended d;
  d.row_offset.assign(sys.slot_count(), -1);
  d.col_offset.assign(sys.slot_count(), -1);
  Index nr = 0;
  for (BlockId r : rows) {
    d.row_offset[r] = nr;
    nr += sys.row_dim(r);
  }
  Index nc = 0;
  for (BlockId c : cols) {
    d.col_offset[c] = nc;
    nc += sys.col_dim(c);
  }
  if (nr != nc) throw Error("extended system is not square");
  if (nr > cap) throw Error("oracle too large");
  d.matrix = Mat::Zero(nr, nc);
  d.rhs = Vec::Zero(nr);
  for (BlockId r : rows)
    for (const auto& [c, blk] : sys.row(r)) d.matrix.block(d.row_offset[r], d.col_offset[c], blk.rows(), blk.cols()) = blk;
  for (std::size_t id = 0; id < sys.slot_count(); ++id) {
    if (sys.slot(static_cast<BlockId>(id)).kind != SlotKind::particle) continue;
    const auto& t = sys.leaf_targets(static_cast<Index>(id));
    for (std::size_t k = 0; k < t.size(); ++k) d.rhs(d.row_offset[id] + static_cast<Index>(k)) = b(t[k]);
  }
  return d;
}

Vec extract_solution(const ExtendedSystem& sys, const DenseExtended& dense, const Vec& solution) {
  Vec x(sys.size_n());
  for (std::size_t id = 0; id < sys.slot_count(); ++id) {
    if (sys.slot(static_cast<BlockId>(id)).kind != SlotKind::particle) continue;
    const auto& s = sys.leaf_sources(static_cast<Index>(id));
    for (std::size_t k = 0; k < s.size(); ++k) x(s[k]) = solution(dense.col_offset[id] + static_cast<Index>(k));
  }
  return x;
}

std::string block_class(const ExtendedSystem& sys, BlockId r, BlockId c) {
  const Slot& a = sys.slot(r);
  const Slot& b = sys.slot(c);
  using K = SlotKind;
  if (a.kind == K::particle && b.kind == K::particle) return "K";
  if (a.kind == K::particle && b.kind == K::local) return "U";
  if (a.kind == K::multipole && b.kind == K::particle) return "V";
  if (a.kind == K::particle && b.kind == K::multipole) return "M2P";
  if (a.kind == K::local && b.kind == K::particle) return "P2L";
  if (a.kind == K::multipole && b.kind == K::multipole) return a.level == b.level ? "-I" : "M2M";
  if (a.kind == K::local && b.kind == K::local) return a.level == b.level ? "-I" : "L2L";
  if (a.kind == K::local && b.kind == K::multipole) return "M2L";
  return "other";
}

void dump_block_pattern(const ExtendedSystem& sys, std::ostream& out) {
  out << "row_block col_block class rows cols\n";
  for (std::size_t r = 0; r < sys.slot_count(); ++r)
    for (const auto& [c, blk] : sys.row(static_cast<BlockId>(r)))
      out << r << ' ' << c << ' ' << block_class(sys, static_cast<BlockId>(r), c) << ' ' << blk.rows() << ' '
          << blk.cols() << '\n';
}

}  // namespace aifmm
