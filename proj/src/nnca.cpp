#include "aifmm/nnca.hpp"

#include <algorithm>
#include <iostream>

#include "parallel.hpp"

namespace aifmm {

namespace {

IndexList far_field(const Tree& tree, int level, Index i, bool sources) {
  // Nodes whose interaction list holds no points borrow the region of their nearest ancestor that has some.
  IndexList out;
  for (; level >= 2 && out.empty(); i = *tree.node(level, i).parent, --level) {
    for (Index j : tree.node(level, i).interaction_list) {
      const auto& other = tree.node(level, j);
      const auto& idx = sources ? other.s_idx : other.t_idx;
      out.insert(out.end(), idx.begin(), idx.end());
    }
  }
  return out;
}

bool skeleton_ok(const KernelMatrix& kernel, const IndexList& rows, const IndexList& cols) {
  try {
    SkeletonSolver solver(kernel.block(rows, cols));
  } catch (const Error&) {
    return false;
  }
  return true;
}

// Drops trailing pivots until the skeleton block is safely invertible.
void shrink_until_invertible(const KernelMatrix& kernel, IndexList& rows, IndexList& cols, const char* what,
                             int level, Index node) {
  while (!rows.empty() && !skeleton_ok(kernel, rows, cols)) {
    rows.pop_back();
    cols.pop_back();
    std::cerr << "aifmm: singular " << what << " skeleton at level " << level << " node " << node
              << ", reduced to rank " << rows.size() << "\n";
  }
}

NodePivots node_pivots(const Tree& tree, const KernelMatrix& kernel, const PivotTree& pt, int level, Index i,
                       double eps) {
  const TreeNode& node = tree.node(level, i);
  IndexList t_cand;
  IndexList s_cand;
  if (level == tree.depth) {
    t_cand = node.t_idx;
    s_cand = node.s_idx;
  } else {
    for (Index c : node.children) {
      const auto& cp = pt.at(level + 1, c);
      t_cand.insert(t_cand.end(), cp.t_in.begin(), cp.t_in.end());
      s_cand.insert(s_cand.end(), cp.s_out.begin(), cp.s_out.end());
    }
  }
  const IndexList f_in = far_field(tree, level, i, true);
  const IndexList f_out = far_field(tree, level, i, false);

  EntryFn direct = [&kernel](Index a, Index b) { return kernel(a, b); };
  // The outgoing block is handled through its transpose so that symmetric kernels pick identical pivots.
  EntryFn transposed = [&kernel](Index a, Index b) { return kernel(b, a); };

  AcaOptions opts;
  opts.eps = eps;
  PivotSet in = aca_pivots(direct, t_cand, f_in, opts);
  PivotSet out = aca_pivots(transposed, s_cand, f_out, opts);
  if (in.rank() < out.rank()) {
    opts.min_rank = out.rank();
    in = aca_pivots(direct, t_cand, f_in, opts);
  } else if (out.rank() < in.rank()) {
    opts.min_rank = in.rank();
    out = aca_pivots(transposed, s_cand, f_out, opts);
  }

  NodePivots p;
  p.t_in = std::move(in.rows);
  p.s_in = std::move(in.cols);
  p.s_out = std::move(out.rows);
  p.t_out = std::move(out.cols);
  shrink_until_invertible(kernel, p.t_in, p.s_in, "incoming", level, i);
  shrink_until_invertible(kernel, p.t_out, p.s_out, "outgoing", level, i);
  return p;
}

}  // namespace

PivotTree compute_nested_pivots(const Tree& tree, const KernelMatrix& kernel, double eps, Exec exec) {
  if (!(eps > 0.0 && eps < 1.0)) throw Error("eps must lie in (0, 1)");
  PivotTree pt;
  pt.levels.resize(tree.depth + 1);
  for (int l = 0; l <= tree.depth; ++l) pt.levels[l].resize(tree.nodes_at(l));
  for (int l = tree.depth; l >= 2; --l) {
    detail::for_each_index(tree.nodes_at(l), exec,
                           [&](Index i) { pt.levels[l][i] = node_pivots(tree, kernel, pt, l, i, eps); });
  }
  return pt;
}

Index OperatorSet::max_rank() const {
  Index r = 0;
  for (const auto& level : levels)
    for (const auto& node : level) r = std::max({r, node.rank_in, node.rank_out});
  return r;
}

OperatorSet assemble_operators(const Tree& tree, const KernelMatrix& kernel, const PivotTree& pivots, double eps,
                               Exec exec) {
  OperatorSet ops;
  ops.depth = tree.depth;
  ops.n = kernel.size();
  ops.eps = eps;
  ops.levels.resize(tree.depth + 1);
  for (int l = 0; l <= tree.depth; ++l) ops.levels[l].resize(tree.nodes_at(l));

  std::vector<std::vector<SkeletonSolver>> in_solvers(tree.depth + 1), out_solvers(tree.depth + 1);
  for (int l = 2; l <= tree.depth; ++l) {
    in_solvers[l].resize(tree.nodes_at(l), SkeletonSolver(Mat(0, 0)));
    out_solvers[l].resize(tree.nodes_at(l), SkeletonSolver(Mat(0, 0)));
    detail::for_each_index(tree.nodes_at(l), exec, [&](Index i) {
      const auto& p = pivots.at(l, i);
      in_solvers[l][i] = SkeletonSolver(kernel.block(p.t_in, p.s_in));
      out_solvers[l][i] = SkeletonSolver(kernel.block(p.t_out, p.s_out));
    });
  }

  for (int l = 2; l <= tree.depth; ++l) {
    detail::for_each_index(tree.nodes_at(l), exec, [&](Index i) {
      const TreeNode& node = tree.node(l, i);
      const NodePivots& p = pivots.at(l, i);
      NodeOperators& op = ops.levels[l][i];
      op.rank_in = static_cast<Index>(p.t_in.size());
      op.rank_out = static_cast<Index>(p.s_out.size());
      if (l == tree.depth) {
        op.l2p = in_solvers[l][i].right_solve(kernel.block(node.t_idx, p.s_in));
        op.p2m = out_solvers[l][i].solve(kernel.block(p.t_out, node.s_idx));
        for (Index j : node.neighbors) op.p2p.emplace_back(j, kernel.block(node.t_idx, tree.node(l, j).s_idx));
      }
      if (l >= 3) {
        const Index parent = *node.parent;
        const NodePivots& pp = pivots.at(l - 1, parent);
        op.l2l = in_solvers[l - 1][parent].right_solve(kernel.block(p.t_in, pp.s_in));
        op.m2m = out_solvers[l - 1][parent].solve(kernel.block(pp.t_out, p.s_out));
      }
      for (Index j : node.interaction_list) op.m2l.emplace_back(j, kernel.block(p.t_in, pivots.at(l, j).s_out));
    });
  }
  return ops;
}

OperatorSet build_operators(const Tree& tree, const KernelMatrix& kernel, double eps, Exec exec) {
  return assemble_operators(tree, kernel, compute_nested_pivots(tree, kernel, eps, exec), eps, exec);
}

Vec h2_matvec(const OperatorSet& ops, const Tree& tree, const Vec& q, Exec exec) {
  if (q.size() != ops.n || ops.depth != tree.depth) throw Error("dimension mismatch");
  const int depth = tree.depth;
  std::vector<std::vector<Vec>> mult(depth + 1), loc(depth + 1);
  for (int l = 2; l <= depth; ++l) {
    mult[l].resize(tree.nodes_at(l));
    loc[l].resize(tree.nodes_at(l));
  }

  detail::for_each_index(tree.nodes_at(depth), exec, [&](Index i) {
    const auto& node = tree.node(depth, i);
    Vec charges(static_cast<Index>(node.s_idx.size()));
    for (Index k = 0; k < charges.size(); ++k) charges(k) = q(node.s_idx[k]);
    mult[depth][i] = ops.at(depth, i).p2m * charges;
  });
  for (int l = depth - 1; l >= 2; --l) {
    detail::for_each_index(tree.nodes_at(l), exec, [&](Index i) {
      Vec acc = Vec::Zero(ops.at(l, i).rank_out);
      for (Index c : tree.node(l, i).children) acc += ops.at(l + 1, c).m2m * mult[l + 1][c];
      mult[l][i] = std::move(acc);
    });
  }
  for (int l = 2; l <= depth; ++l) {
    detail::for_each_index(tree.nodes_at(l), exec, [&](Index i) {
      Vec acc = Vec::Zero(ops.at(l, i).rank_in);
      for (const auto& [j, a] : ops.at(l, i).m2l) acc += a * mult[l][j];
      loc[l][i] = std::move(acc);
    });
  }
  for (int l = 3; l <= depth; ++l) {
    detail::for_each_index(tree.nodes_at(l), exec, [&](Index i) {
      loc[l][i] += ops.at(l, i).l2l * loc[l - 1][*tree.node(l, i).parent];
    });
  }

  Vec out = Vec::Zero(q.size());
  detail::for_each_index(tree.nodes_at(depth), exec, [&](Index i) {
    const auto& node = tree.node(depth, i);
    const auto& op = ops.at(depth, i);
    Vec phi = op.l2p * loc[depth][i];
    for (const auto& [j, k] : op.p2p) {
      const auto& src = tree.node(depth, j).s_idx;
      Vec charges(static_cast<Index>(src.size()));
      for (Index a = 0; a < charges.size(); ++a) charges(a) = q(src[a]);
      phi += k * charges;
    }
    for (Index a = 0; a < phi.size(); ++a) out(node.t_idx[a]) = phi(a);
  });
  return out;
}

}  // namespace aifmm
