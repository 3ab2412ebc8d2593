#include "aifmm/iterative.hpp"

#include <cmath>
#include <ostream>
#include <string>

#include "aifmm/nnca.hpp"
#include "aifmm/solve.hpp"

namespace aifmm {

const char* precond_name(PrecondKind kind) {
  switch (kind) {
    case PrecondKind::none: return "none";
    case PrecondKind::block_diagonal: return "bd";
    case PrecondKind::aifmm: return "aifmm";
  }
  return "?";
}

PrecondKind parse_precond(const std::string& name) {
  if (name == "none") return PrecondKind::none;
  if (name == "bd") return PrecondKind::block_diagonal;
  if (name == "aifmm") return PrecondKind::aifmm;
  throw Error("unknown preconditioner: " + name);
}

Vec Preconditioner::apply(const Vec& v) const {
  switch (kind_) {
    case PrecondKind::none: return v;
    case PrecondKind::block_diagonal: {
      Vec out = Vec::Zero(v.size());
      for (const auto& leaf : leaves_) {
        Vec seg(static_cast<Index>(leaf.rows.size()));
        for (Index a = 0; a < seg.size(); ++a) seg(a) = v(leaf.rows[a]);
        const Vec x = leaf.lu.solve(seg);
        for (Index a = 0; a < x.size(); ++a) out(leaf.cols[a]) = x(a);
      }
      return out;
    }
    case PrecondKind::aifmm: return solve(*fact_, v);
  }
  return v;
}

Preconditioner Preconditioner::block_diagonal(const Tree& tree, const KernelMatrix& kernel) {
  Preconditioner p;
  p.kind_ = PrecondKind::block_diagonal;
  for (const auto& node : tree.levels[tree.depth]) {
    if (node.t_idx.size() != node.s_idx.size()) throw Error("leaf block is not square");
    if (node.t_idx.empty()) continue;
    LeafBlock leaf;
    leaf.rows = node.t_idx;
    leaf.cols = node.s_idx;
    const Mat k = kernel.block(node.t_idx, node.s_idx);
    leaf.lu.compute(k);
    const double smallest = leaf.lu.matrixLU().diagonal().cwiseAbs().minCoeff();
    if (!(smallest >= 1e-14 * k.cwiseAbs().maxCoeff())) throw Error("singular leaf block");
    p.leaves_.push_back(std::move(leaf));
  }
  return p;
}

Preconditioner Preconditioner::aifmm(const Tree& tree, const KernelMatrix& kernel, double eps_coarse,
                                     Strategy strategy) {
  OperatorSet ops = build_operators(tree, kernel, eps_coarse);
  FactorOptions opts;
  opts.eps = eps_coarse;
  opts.strategy = strategy;
  return from_factorization(factorize(tree, std::move(ops), opts));
}

Preconditioner Preconditioner::from_factorization(Factorization fact) {
  Preconditioner p;
  p.kind_ = PrecondKind::aifmm;
  p.fact_ = std::make_shared<const Factorization>(std::move(fact));
  return p;
}

Preconditioner block_diagonal_precond(const Tree& tree, const KernelMatrix& kernel) {
  return Preconditioner::block_diagonal(tree, kernel);
}

Preconditioner aifmm_precond(const Tree& tree, const KernelMatrix& kernel, double eps_coarse) {
  return Preconditioner::aifmm(tree, kernel, eps_coarse);
}

namespace {

// Plane rotation zeroing b in (a, b).
void make_rotation(Complex a, Complex b, double& c, Complex& s) {
  const double na = std::abs(a);
  const double nb = std::abs(b);
  if (nb == 0.0) {
    c = 1.0;
    s = 0.0;
  } else if (na == 0.0) {
    c = 0.0;
    s = std::conj(b) / nb;
  } else {
    const double norm = std::hypot(na, nb);
    c = na / norm;
    s = (a / na) * std::conj(b) / norm;
  }
}

}  // namespace

GmresResult gmres(const LinearOperator& matvec, const Vec& b, const GmresConfig& cfg, const Preconditioner& precond) {
  if (!(cfg.tol > 0.0 && cfg.tol < 1.0) || cfg.max_iter < 1) throw Error("invalid GMRES configuration");
  const Index n = b.size();
  GmresResult res;
  res.x = Vec::Zero(n);
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    res.converged = true;
    res.history.push_back(0.0);
    return res;
  }
  const Index cycle = cfg.restart > 0 ? cfg.restart : cfg.max_iter;

  Vec r = b;
  double beta = bnorm;
  res.history.push_back(beta / bnorm);
  while (res.iterations < cfg.max_iter) {
    const Index m = std::min(cycle, cfg.max_iter - res.iterations);
    std::vector<Vec> basis;
    basis.push_back(r / beta);
    Mat h = Mat::Zero(m + 1, m);
    std::vector<double> cs(m);
    std::vector<Complex> sn(m);
    Vec g = Vec::Zero(m + 1);
    g(0) = beta;
    Index k = 0;
    bool done = false;
    for (; k < m; ++k) {
      Vec w = matvec(precond.apply(basis[k]));
      for (int pass = 0; pass < 2; ++pass) {
        for (Index j = 0; j <= k; ++j) {
          const Complex coef = basis[j].dot(w);
          h(j, k) += coef;
          w -= coef * basis[j];
        }
      }
      const double wnorm = w.norm();
      h(k + 1, k) = wnorm;
      for (Index j = 0; j < k; ++j) {
        const Complex t = cs[j] * h(j, k) + sn[j] * h(j + 1, k);
        h(j + 1, k) = -std::conj(sn[j]) * h(j, k) + cs[j] * h(j + 1, k);
        h(j, k) = t;
      }
      make_rotation(h(k, k), h(k + 1, k), cs[k], sn[k]);
      h(k, k) = cs[k] * h(k, k) + sn[k] * h(k + 1, k);
      h(k + 1, k) = 0.0;
      g(k + 1) = -std::conj(sn[k]) * g(k);
      g(k) = cs[k] * g(k);
      ++res.iterations;
      const double rel = std::abs(g(k + 1)) / bnorm;
      res.history.push_back(rel);
      if (rel <= cfg.tol || wnorm == 0.0) {
        done = true;
        ++k;
        break;
      }
      basis.push_back(w / wnorm);
    }
    // Solve the small triangular system and update the iterate.
    const Vec coeff = h.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
    Vec update = Vec::Zero(n);
    for (Index j = 0; j < k; ++j) update += coeff(j) * basis[j];
    res.x += precond.apply(update);
    if (done) break;
    r = b - matvec(res.x);
    beta = r.norm();
    if (beta / bnorm <= cfg.tol) break;
  }
  res.converged = res.history.back() <= cfg.tol;
  return res;
}

void write_history_csv(const GmresResult& result, std::ostream& out) {
  out << "iteration,relative_residual\n";
  for (std::size_t k = 0; k < result.history.size(); ++k) out << k << ',' << result.history[k] << '\n';
}

}  // namespace aifmm
