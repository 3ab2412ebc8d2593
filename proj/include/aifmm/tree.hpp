#pragma once

#include <optional>

#include "aifmm/types.hpp"

namespace aifmm {

// Targets and sources are stored column-wise (dim x N).
struct PointCloud {
  Eigen::MatrixXd targets;
  Eigen::MatrixXd sources;

  int dim() const { return static_cast<int>(targets.rows()); }
  Index size() const { return targets.cols(); }

  static PointCloud coincident(Eigen::MatrixXd points);
};

struct Hypercube {
  Eigen::VectorXd center;
  double half_side = 0.0;
};

inline constexpr double kMinHalfSide = 1.0 / (1 << 20);

Hypercube fit_domain(const PointCloud& points);

struct TreeNode {
  int level = 0;
  Index index = 0;
  std::vector<std::int64_t> coords;  // integer box position per axis at this level
  Eigen::VectorXd center;
  double half_side = 0.0;
  std::optional<Index> parent;
  IndexList children;
  IndexList t_idx;
  IndexList s_idx;
  IndexList neighbors;         // same-level, includes self
  IndexList interaction_list;  // same-level
};

class Tree {
 public:
  int dim = 2;
  int depth = 0;
  Index n_max = 0;
  double eta = 0.0;
  Hypercube root;
  std::vector<std::vector<TreeNode>> levels;

  const TreeNode& node(int level, Index i) const { return levels[level][i]; }
  Index nodes_at(int level) const { return static_cast<Index>(levels[level].size()); }
  Index children_per_node() const { return Index{1} << dim; }
  bool is_neighbor(int level, Index i, Index j) const;
  bool in_interaction_list(int level, Index i, Index j) const;
};

// Builds the uniform 2^d tree. eta defaults to sqrt(d).
Tree build_tree(const PointCloud& points, Index n_max, std::optional<double> eta = std::nullopt);

bool is_admissible(const TreeNode& x, const TreeNode& y, double eta);

void compute_lists(Tree& tree);

}  // namespace aifmm
