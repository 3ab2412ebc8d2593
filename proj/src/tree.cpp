#include "aifmm/tree.hpp"

#include <algorithm>
#include <cmath>

namespace aifmm {

namespace {

constexpr int kMaxLevelBits = 22;  // at most 2^22 boxes on the finest level

// Position of a point inside the root cube, scaled to [0, 1] per axis.
Eigen::MatrixXd unit_coordinates(const Eigen::MatrixXd& pts, const Hypercube& root) {
  Eigen::MatrixXd u(pts.rows(), pts.cols());
  const double side = 2.0 * root.half_side;
  for (Index j = 0; j < pts.cols(); ++j)
    for (Index k = 0; k < pts.rows(); ++k)
      u(k, j) = (pts(k, j) - (root.center(k) - root.half_side)) / side;
  return u;
}

std::int64_t cell_of(double u, int level) {
  const std::int64_t n = std::int64_t{1} << level;
  auto c = static_cast<std::int64_t>(std::floor(u * static_cast<double>(n)));
  return std::clamp<std::int64_t>(c, 0, n - 1);
}

std::uint64_t linear_key(const std::vector<std::int64_t>& coords, int level) {
  std::uint64_t key = 0;
  for (auto it = coords.rbegin(); it != coords.rend(); ++it)
    key = (key << level) | static_cast<std::uint64_t>(*it);
  return key;
}

Index max_occupancy(const Eigen::MatrixXd& u, int level) {
  const int d = static_cast<int>(u.rows());
  std::vector<Index> count(std::size_t{1} << (d * level), 0);
  std::vector<std::int64_t> c(d);
  Index best = 0;
  for (Index j = 0; j < u.cols(); ++j) {
    for (int k = 0; k < d; ++k) c[k] = cell_of(u(k, j), level);
    best = std::max(best, ++count[linear_key(c, level)]);
  }
  return best;
}

}  // namespace

PointCloud PointCloud::coincident(Eigen::MatrixXd points) {
  PointCloud pc;
  pc.targets = points;
  pc.sources = std::move(points);
  return pc;
}

Hypercube fit_domain(const PointCloud& points) {
  if (points.targets.cols() == 0 || points.sources.cols() == 0) throw Error("empty input");
  if (points.targets.rows() != points.sources.rows() || points.targets.rows() < 1)
    throw Error("targets and sources must share a positive dimension");
  if (points.targets.cols() != points.sources.cols())
    throw Error("targets and sources must have equal cardinality");
  if (!points.targets.allFinite() || !points.sources.allFinite()) throw Error("non-finite input");

  const Eigen::VectorXd lo = points.targets.rowwise().minCoeff().cwiseMin(points.sources.rowwise().minCoeff());
  const Eigen::VectorXd hi = points.targets.rowwise().maxCoeff().cwiseMax(points.sources.rowwise().maxCoeff());
  Hypercube cube;
  cube.center = 0.5 * (lo + hi);
  cube.half_side = std::max(0.5 * (hi - lo).maxCoeff(), kMinHalfSide);
  return cube;
}

bool Tree::is_neighbor(int level, Index i, Index j) const {
  const auto& n = levels[level][i].neighbors;
  return std::binary_search(n.begin(), n.end(), j);
}

bool Tree::in_interaction_list(int level, Index i, Index j) const {
  const auto& il = levels[level][i].interaction_list;
  return std::binary_search(il.begin(), il.end(), j);
}

bool is_admissible(const TreeNode& x, const TreeNode& y, double eta) {
  if (x.level != y.level) throw Error("admissibility requires boxes on the same level");
  const auto d = static_cast<double>(x.center.size());
  const double diam = 2.0 * std::max(x.half_side, y.half_side) * std::sqrt(d);
  double dist2 = 0.0;
  for (Index k = 0; k < x.center.size(); ++k) {
    const double gap = std::abs(x.center(k) - y.center(k)) - (x.half_side + y.half_side);
    if (gap > 0.0) dist2 += gap * gap;
  }
  // Relative slack so that boxes exactly on the boundary of the condition are admitted
  // regardless of rounding in the center coordinates.
  return diam <= eta * std::sqrt(dist2) * (1.0 + 1e-10);
}

void compute_lists(Tree& tree) {
  const int d = tree.dim;
  const int radius = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d)) / tree.eta)) + 1;

  tree.levels[0][0].neighbors = {0};
  for (int l = 1; l <= tree.depth; ++l) {
    auto& level = tree.levels[l];
    const std::int64_t n = std::int64_t{1} << l;
    std::vector<Index> index_of(level.size());
    for (const auto& node : level) index_of[linear_key(node.coords, l)] = node.index;

    for (auto& node : level) {
      node.neighbors.clear();
      std::vector<std::int64_t> off(d, -radius);
      std::vector<std::int64_t> c(d);
      while (true) {
        bool inside = true;
        for (int k = 0; k < d; ++k) {
          c[k] = node.coords[k] + off[k];
          inside = inside && c[k] >= 0 && c[k] < n;
        }
        if (inside) {
          const Index j = index_of[linear_key(c, l)];
          if (!is_admissible(node, level[j], tree.eta)) node.neighbors.push_back(j);
        }
        int k = 0;
        while (k < d && ++off[k] > radius) off[k++] = -radius;
        if (k == d) break;
      }
      std::sort(node.neighbors.begin(), node.neighbors.end());
    }
  }

  for (int l = 2; l <= tree.depth; ++l) {
    for (auto& node : tree.levels[l]) {
      node.interaction_list.clear();
      for (Index pn : tree.levels[l - 1][*node.parent].neighbors)
        for (Index c : tree.levels[l - 1][pn].children)
          if (!tree.is_neighbor(l, node.index, c) && is_admissible(node, tree.levels[l][c], tree.eta))
            node.interaction_list.push_back(c);
      std::sort(node.interaction_list.begin(), node.interaction_list.end());
    }
  }
}

Tree build_tree(const PointCloud& points, Index n_max, std::optional<double> eta) {
  if (n_max < 1) throw Error("n_max must be positive");
  Tree tree;
  tree.root = fit_domain(points);
  tree.dim = points.dim();
  tree.n_max = n_max;
  tree.eta = eta.value_or(std::sqrt(static_cast<double>(tree.dim)));
  if (!(tree.eta > 0.0)) throw Error("eta must be positive");
  const int d = tree.dim;

  const Eigen::MatrixXd ut = unit_coordinates(points.targets, tree.root);
  const Eigen::MatrixXd us = unit_coordinates(points.sources, tree.root);

  int depth = 2;
  while (std::max(max_occupancy(ut, depth), max_occupancy(us, depth)) > n_max) {
    if (d * (depth + 1) > kMaxLevelBits) throw Error("cannot resolve leaf occupancy (coincident points?)");
    ++depth;
  }
  tree.depth = depth;

  const Index nc = Index{1} << d;
  tree.levels.resize(depth + 1);
  TreeNode root;
  root.coords.assign(d, 0);
  root.center = tree.root.center;
  root.half_side = tree.root.half_side;
  tree.levels[0].push_back(std::move(root));
  for (int l = 1; l <= depth; ++l) {
    auto& parents = tree.levels[l - 1];
    auto& level = tree.levels[l];
    level.resize(parents.size() * nc);
    const double half = tree.root.half_side / static_cast<double>(std::int64_t{1} << l);
    for (auto& p : parents) {
      for (Index c = 0; c < nc; ++c) {
        const auto g = static_cast<std::uint64_t>(c) ^ (static_cast<std::uint64_t>(c) >> 1);
        TreeNode& node = level[p.index * nc + c];
        node.level = l;
        node.index = p.index * nc + c;
        node.parent = p.index;
        node.half_side = half;
        node.coords.resize(d);
        node.center.resize(d);
        for (int k = 0; k < d; ++k) {
          node.coords[k] = 2 * p.coords[k] + static_cast<std::int64_t>((g >> k) & 1u);
          node.center(k) = tree.root.center(k) - tree.root.half_side +
                           (2.0 * static_cast<double>(node.coords[k]) + 1.0) * half;
        }
        p.children.push_back(node.index);
      }
    }
  }

  // Leaf lookup by integer coordinates.
  auto& leaves = tree.levels[depth];
  std::vector<Index> leaf_of(leaves.size());
  for (const auto& node : leaves) leaf_of[linear_key(node.coords, depth)] = node.index;
  std::vector<std::int64_t> c(d);
  auto leaf_for = [&](const Eigen::MatrixXd& u, Index j) {
    for (int k = 0; k < d; ++k) c[k] = cell_of(u(k, j), depth);
    return leaf_of[linear_key(c, depth)];
  };
  for (Index j = 0; j < points.size(); ++j) {
    leaves[leaf_for(ut, j)].t_idx.push_back(j);
    leaves[leaf_for(us, j)].s_idx.push_back(j);
  }
  for (int l = depth - 1; l >= 0; --l) {
    for (auto& node : tree.levels[l]) {
      for (Index ch : node.children) {
        const auto& child = tree.levels[l + 1][ch];
        node.t_idx.insert(node.t_idx.end(), child.t_idx.begin(), child.t_idx.end());
        node.s_idx.insert(node.s_idx.end(), child.s_idx.begin(), child.s_idx.end());
      }
    }
  }

  compute_lists(tree);
  return tree;
}

}  // namespace aifmm
