#pragma once

#include <iosfwd>
#include <map>
#include <set>

#include "aifmm/nnca.hpp"

namespace aifmm {

// Rows: particle equations (leaf X), multipole equations (Y), local equations (Z).
// Columns: particle unknowns (leaf x), multipoles (y), locals (z).
// A row id and a column id with the same value refer to the same (kind, level, node) slot.
enum class SlotKind : std::uint8_t { particle, multipole, local };

struct Slot {
  SlotKind kind = SlotKind::particle;
  int level = 0;
  Index node = 0;
};

using BlockId = int;

class ExtendedSystem {
 public:
  ExtendedSystem() = default;
  // Takes the operator blocks over; pass an rvalue to avoid a copy.
  ExtendedSystem(const Tree& tree, OperatorSet ops);

  int depth() const { return depth_; }
  Index size_n() const { return n_; }
  std::size_t slot_count() const { return slots_.size(); }
  const Slot& slot(BlockId id) const { return slots_[id]; }

  BlockId particle_id(Index leaf) const { return static_cast<BlockId>(leaf); }
  BlockId multipole_id(int level, Index i) const { return static_cast<BlockId>(multipole_offset_[level] + i); }
  BlockId local_id(int level, Index i) const { return static_cast<BlockId>(local_offset_[level] + i); }

  // Equations / unknowns that play the particle role for node i at this level:
  // the leaf's own particles, or the children's locals (rows) and multipoles (columns).
  std::vector<BlockId> particle_rows(int level, Index i) const;
  std::vector<BlockId> particle_cols(int level, Index i) const;

  Index row_dim(BlockId id) const { return row_dim_[id]; }
  Index col_dim(BlockId id) const { return col_dim_[id]; }
  Index group_rows(const std::vector<BlockId>& ids) const;
  Index group_cols(const std::vector<BlockId>& ids) const;
  void set_rank_in(int level, Index i, Index r);   // dims of Z_i and z_i
  void set_rank_out(int level, Index i, Index r);  // dims of Y_i and y_i

  const Mat* find(BlockId r, BlockId c) const;
  Mat* find(BlockId r, BlockId c);
  void set(BlockId r, BlockId c, Mat block);
  void add(BlockId r, BlockId c, const Mat& block);
  void erase(BlockId r, BlockId c);
  void erase_row(BlockId r);
  void erase_col(BlockId c);
  const std::map<BlockId, Mat>& row(BlockId r) const { return by_row_[r]; }
  std::map<BlockId, Mat>& row(BlockId r) { return by_row_[r]; }
  const std::set<BlockId>& col(BlockId c) const { return by_col_[c]; }

  Mat gather(const std::vector<BlockId>& rows, const std::vector<BlockId>& cols) const;
  // Writes each sub-block of m, dropping sub-blocks with a zero dimension.
  void scatter(const std::vector<BlockId>& rows, const std::vector<BlockId>& cols, const Mat& m);
  bool any_block(const std::vector<BlockId>& rows, const std::vector<BlockId>& cols) const;

  std::size_t block_count() const;
  Index max_rank() const;

  // Row and column block orders of the full system (level L up to level 1).
  std::vector<BlockId> row_order() const;
  std::vector<BlockId> col_order() const;
  Index total_dim() const;

  const IndexList& leaf_targets(Index leaf) const { return leaf_targets_[leaf]; }
  const IndexList& leaf_sources(Index leaf) const { return leaf_sources_[leaf]; }

 private:
  int depth_ = 0;
  Index n_ = 0;
  Index children_ = 4;
  std::vector<Slot> slots_;
  std::vector<Index> multipole_offset_;
  std::vector<Index> local_offset_;
  std::vector<Index> row_dim_;
  std::vector<Index> col_dim_;
  std::vector<std::map<BlockId, Mat>> by_row_;
  std::vector<std::set<BlockId>> by_col_;
  std::vector<IndexList> leaf_targets_;
  std::vector<IndexList> leaf_sources_;
};

ExtendedSystem build_extended_system(const Tree& tree, OperatorSet ops);

struct DenseExtended {
  Mat matrix;
  Vec rhs;
  std::vector<Index> row_offset;  // per block id, -1 if absent
  std::vector<Index> col_offset;
};

// Materializes the whole extended system; b is the right-hand side in original point order.
DenseExtended densify(const ExtendedSystem& sys, const Vec& b, Index cap = 8192);

// Reads the particle unknowns out of a dense extended solution, in original point order.
Vec extract_solution(const ExtendedSystem& sys, const DenseExtended& dense, const Vec& solution);

// Name of the operator class a block belongs to (K, U, V, -I, L2L, M2M, M2L, M2P, P2L).
std::string block_class(const ExtendedSystem& sys, BlockId r, BlockId c);

// One line per nonzero block: row id, column id, class, rows, cols.
void dump_block_pattern(const ExtendedSystem& sys, std::ostream& out);

}  // namespace aifmm
