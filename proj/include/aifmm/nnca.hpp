#pragma once

#include <utility>

#include "aifmm/kernel.hpp"
#include "aifmm/lowrank.hpp"
#include "aifmm/tree.hpp"

namespace aifmm {

struct NodePivots {
  IndexList t_in;   // incoming target pivots
  IndexList s_in;   // incoming far-field source pivots
  IndexList t_out;  // outgoing far-field target pivots
  IndexList s_out;  // outgoing source pivots
};

struct PivotTree {
  std::vector<std::vector<NodePivots>> levels;  // levels 0..L; only levels >= 2 are populated
  const NodePivots& at(int level, Index i) const { return levels[level][i]; }
};

PivotTree compute_nested_pivots(const Tree& tree, const KernelMatrix& kernel, double eps,
                                Exec exec = Exec::parallel);

using BlockList = std::vector<std::pair<Index, Mat>>;

struct NodeOperators {
  Mat l2p;        // leaves: |t| x rank_in
  Mat p2m;        // leaves: rank_out x |s|, applied to source charges
  Mat l2l;        // levels >= 3: rank_in x rank_in(parent)
  Mat m2m;        // levels >= 3: rank_out(parent) x rank_out
  BlockList m2l;  // over the interaction list: rank_in x rank_out(other)
  BlockList p2p;  // leaves, over neighbors including self: |t| x |s(other)|
  Index rank_in = 0;
  Index rank_out = 0;
};

struct OperatorSet {
  int depth = 0;
  Index n = 0;
  double eps = 0.0;
  std::vector<std::vector<NodeOperators>> levels;  // levels 0..L; only levels >= 2 are populated

  const NodeOperators& at(int level, Index i) const { return levels[level][i]; }
  Index max_rank() const;
};

OperatorSet assemble_operators(const Tree& tree, const KernelMatrix& kernel, const PivotTree& pivots, double eps,
                               Exec exec = Exec::parallel);

// Pivots followed by operators.
OperatorSet build_operators(const Tree& tree, const KernelMatrix& kernel, double eps, Exec exec = Exec::parallel);

Vec h2_matvec(const OperatorSet& ops, const Tree& tree, const Vec& q, Exec exec = Exec::parallel);

}  // namespace aifmm
