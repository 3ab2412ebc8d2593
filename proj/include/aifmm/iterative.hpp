#pragma once

#include <functional>
#include <iosfwd>
#include <memory>

#include "aifmm/factor.hpp"
#include "aifmm/kernel.hpp"

namespace aifmm {

using LinearOperator = std::function<Vec(const Vec&)>;

struct GmresConfig {
  double tol = 1e-10;
  Index max_iter = 1000;
  Index restart = 0;  // 0 = no restart
};

struct GmresResult {
  Vec x;
  Index iterations = 0;
  bool converged = false;
  std::vector<double> history;  // relative residual, starting with the initial one
};

enum class PrecondKind { none, block_diagonal, aifmm };

const char* precond_name(PrecondKind kind);
PrecondKind parse_precond(const std::string& name);

class Preconditioner {
 public:
  Preconditioner() = default;  // identity

  PrecondKind kind() const { return kind_; }
  Vec apply(const Vec& v) const;

  static Preconditioner block_diagonal(const Tree& tree, const KernelMatrix& kernel);
  static Preconditioner aifmm(const Tree& tree, const KernelMatrix& kernel, double eps_coarse,
                              Strategy strategy = Strategy::efficient);
  static Preconditioner from_factorization(Factorization fact);

  const Factorization* factorization() const { return fact_.get(); }

 private:
  struct LeafBlock {
    IndexList rows;  // targets
    IndexList cols;  // sources
    Eigen::PartialPivLU<Mat> lu;
  };

  PrecondKind kind_ = PrecondKind::none;
  std::vector<LeafBlock> leaves_;
  std::shared_ptr<const Factorization> fact_;
};

Preconditioner block_diagonal_precond(const Tree& tree, const KernelMatrix& kernel);
Preconditioner aifmm_precond(const Tree& tree, const KernelMatrix& kernel, double eps_coarse = 1e-4);

// Right-preconditioned GMRES with modified Gram-Schmidt and one reorthogonalization pass.
GmresResult gmres(const LinearOperator& matvec, const Vec& b, const GmresConfig& cfg,
                  const Preconditioner& precond = Preconditioner());

void write_history_csv(const GmresResult& result, std::ostream& out);

}  // namespace aifmm
