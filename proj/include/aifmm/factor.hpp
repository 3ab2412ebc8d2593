#pragma once

#include <iosfwd>
#include <map>
#include <set>
#include <tuple>
#include <utility>

#include "aifmm/extsys.hpp"

namespace aifmm {

enum class FillKind { P2P, P2L, M2P, M2L };
enum class Strategy { naive, efficient };

const char* fill_kind_name(FillKind kind);

struct FactorOptions {
  double eps = 1e-10;
  Strategy strategy = Strategy::efficient;
  bool check_compressions = false;  // verify the represented-block identity of every compression
  bool check_sparsity = false;      // audit the block pattern after every level
  bool record_fill_ranks = false;   // SVD rank of leaf-level P2P fill-ins before they are compressed
  double fill_rank_tol = 1e-10;
};

struct CompressionCheck {
  FillKind kind = FillKind::P2P;
  int level = 0;
  Index target = 0;
  Index source = 0;
  double relative_error = 0.0;
};

struct FillRankSample {
  Index target = 0;
  Index source = 0;
  Index rank = 0;
  Index rows = 0;
  Index cols = 0;
};

struct LevelStats {
  int level = 0;
  Index max_rank = 0;
  Index fill_blocks = 0;  // blocks created by Schur updates
  Index compressions = 0;
  Index rrqr_calls = 0;
  Index padded_nodes = 0;
  double seconds = 0.0;
};

struct FactorStats {
  Index rrqr_calls = 0;
  Index compress_p2p = 0;
  Index compress_p2l = 0;
  Index compress_m2p = 0;
  Index padded_nodes = 0;
  Index max_rank = 0;
  Index sparsity_violations = 0;
  Index compressed_pairs = 0;          // distinct well-separated pairs that were compressed
  Index max_compressions_per_pair = 0;
  double seconds = 0.0;
  std::vector<LevelStats> levels;
  std::vector<CompressionCheck> checks;
  std::vector<FillRankSample> fill_ranks;

  Index compressions() const { return compress_p2p + compress_p2l + compress_m2p; }
  void write_level_csv(std::ostream& out) const;
};

// A nonzero sub-block of a coupling, placed at `offset` within the stacked pivot rows or columns.
struct PivotBlock {
  Index offset = 0;
  Mat block;
};

// Everything needed to replay one node elimination on a right-hand side.
struct EliminationRecord {
  int level = 0;
  Index node = 0;
  std::vector<BlockId> pivot_rows;
  std::vector<BlockId> pivot_cols;
  Index pivot_dim = 0;
  Eigen::PartialPivLU<Mat> lu;
  std::vector<BlockId> coupled_rows;
  std::vector<std::vector<PivotBlock>> row_couplings;  // coupled row x pivot columns
  std::vector<BlockId> coupled_cols;
  std::vector<std::vector<PivotBlock>> col_couplings;  // pivot rows x coupled column
};

class Factorization {
 public:
  Index n = 0;
  int depth = 0;
  double eps = 0.0;
  Strategy strategy = Strategy::efficient;
  std::vector<IndexList> leaf_targets;
  std::vector<IndexList> leaf_sources;
  std::vector<Index> row_dim;
  std::vector<Index> col_dim;
  std::vector<EliminationRecord> records;
  std::vector<BlockId> root_rows;
  std::vector<BlockId> root_cols;
  Eigen::PartialPivLU<Mat> root_lu;
  Index root_dim = 0;
  FactorStats stats;

  // Order-sensitive digest of all stored numbers; used to verify solves leave it untouched.
  double checksum() const;
};

// Step-by-step elimination over an extended system. Exposed for testing; factorize() drives it.
class Eliminator {
 public:
  Eliminator(const Tree& tree, ExtendedSystem& sys, FactorOptions opts);

  bool eliminated(int level, Index i) const { return eliminated_[level][i] != 0; }

  // Removes the particle and local unknowns of node i; Schur updates land on its neighbours.
  void eliminate_node(int level, Index i);

  // Fill-in from the particles of j into the particles of i (neither eliminated).
  void compress_redirect_p2p(int level, Index i, Index j);
  // Fill-in from the particles of j into the locals of eliminated i.
  void compress_redirect_p2l(int level, Index i, Index j);
  // Fill-in from the multipoles of eliminated j into the particles of i.
  void compress_redirect_m2p(int level, Index i, Index j);

  // Pads the smaller of the incoming/outgoing bases of node i so both have the same rank.
  void equalize_ranks(int level, Index i);

  // Audits the block pattern; returns the number of blocks coupling nodes that should not interact.
  Index count_sparsity_violations() const;

  void run_level(int level);
  Factorization finish();

  const FactorStats& stats() const { return stats_; }
  const ExtendedSystem& system() const { return sys_; }
  std::size_t pending_p2p() const { return pending_p2p_.size(); }
  std::size_t pending_p2l() const { return pending_p2l_.size(); }

 private:
  void handle_fill(int level, Index i);
  void compress_pending(int level, Index i);
  void compress_p2p_pair(int level, Index p, Index q);
  void compress_p2l_pair(int level, Index eliminated, Index other);
  void transform_local_row(int level, Index i, const Mat& left, BlockId skip_col);
  void transform_multipole_col(int level, Index j, const Mat& right_adjoint, BlockId skip_row);
  void replace_incoming(int level, Index i, const Mat& basis);
  void replace_outgoing(int level, Index j, const Mat& basis);
  void note_rank(Index r);
  void note_pair(int kind, int level, Index a, Index b);
  void sample_fill_rank(Index i, Index j, const Mat& fill);
  LevelStats& level_stats(int level);

  const Tree& tree_;
  ExtendedSystem& sys_;
  FactorOptions opts_;
  std::vector<std::vector<char>> eliminated_;
  std::set<std::pair<Index, Index>> pending_p2p_;  // unordered pairs stored as (min, max)
  std::set<std::pair<Index, Index>> pending_p2l_;  // (eliminated, not eliminated)
  std::map<std::tuple<int, int, Index, Index>, Index> pair_compressions_;  // (kind, level, first, second)
  std::vector<EliminationRecord> records_;
  FactorStats stats_;
};

// The operator blocks become part of the factored system; pass an rvalue to avoid a copy.
Factorization factorize(const Tree& tree, OperatorSet ops, const FactorOptions& opts);
Factorization factorize_naive(const Tree& tree, const OperatorSet& ops, double eps);
Factorization factorize_efficient(const Tree& tree, const OperatorSet& ops, double eps);

}  // namespace aifmm
