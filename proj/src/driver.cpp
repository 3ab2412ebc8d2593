#include "aifmm/driver.hpp"

#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "aifmm/nnca.hpp"
#include "aifmm/solve.hpp"

namespace aifmm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

constexpr double kResidualMatvecEps = 1e-12;

}  // namespace

SolverKind parse_solver(const std::string& name) {
  if (name == "aifmm") return SolverKind::aifmm;
  if (name == "gmres") return SolverKind::gmres;
  if (name == "oracle") return SolverKind::oracle;
  throw Error("unknown solver: " + name);
}

const char* solver_name(SolverKind kind) {
  switch (kind) {
    case SolverKind::aifmm: return "aifmm";
    case SolverKind::gmres: return "gmres";
    case SolverKind::oracle: return "oracle";
  }
  return "?";
}

GridKind parse_grid(const std::string& name) {
  if (name == "random") return GridKind::random;
  if (name == "tensor") return GridKind::tensor;
  throw Error("unknown grid: " + name);
}

PointCloud make_points(GridKind grid, Index n, std::uint64_t seed) {
  if (n < 1) throw Error("N must be positive");
  Eigen::MatrixXd pts(2, n);
  if (grid == GridKind::random) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (Index j = 0; j < n; ++j) {
      pts(0, j) = dist(rng);
      pts(1, j) = dist(rng);
    }
  } else {
    const auto side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(n))));
    if (side * side != n) throw Error("tensor grid needs a square N");
    const double h = 2.0 / static_cast<double>(side);
    for (Index a = 0; a < side; ++a)
      for (Index b = 0; b < side; ++b) {
        pts(0, a * side + b) = -1.0 + (static_cast<double>(b) + 0.5) * h;
        pts(1, a * side + b) = -1.0 + (static_cast<double>(a) + 0.5) * h;
      }
  }
  return PointCloud::coincident(std::move(pts));
}

KernelSpec make_kernel(KernelKind kind, Index n, double wavenumber) {
  switch (kind) {
    case KernelKind::laplace2d_reg: return KernelSpec::laplace(n);
    case KernelKind::helmholtz2d_reg: return KernelSpec::helmholtz(n, wavenumber);
    case KernelKind::fredholm_log: return KernelSpec::fredholm(n, 2.0 / std::sqrt(static_cast<double>(n)));
  }
  throw Error("unknown kernel");
}

Vec make_rhs(RhsKind kind, Index n, std::uint64_t seed) {
  if (kind == RhsKind::ones) return Vec::Ones(n);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  Vec b(n);
  for (Index j = 0; j < n; ++j) {
    const double re = dist(rng);
    const double im = dist(rng);
    b(j) = Complex(re, im);
  }
  return b;
}

RunResult run(const RunConfig& cfg) {
  if (cfg.n < 1 || cfg.n_max < 1) throw Error("N and n_max must be positive");
  if (!(cfg.eps_a > 0.0 && cfg.eps_a < 1.0)) throw Error("eps_a must lie in (0, 1)");
  const PointCloud points = make_points(cfg.grid, cfg.n, cfg.seed);
  const KernelMatrix kernel(make_kernel(cfg.kernel, cfg.n, cfg.wavenumber), points);
  const Vec b = make_rhs(cfg.rhs, cfg.n, cfg.seed);
  RunResult res;
  Vec x;

  if (cfg.solver == SolverKind::oracle) {
    auto t0 = Clock::now();
    const Mat a = dense_matrix(kernel, cfg.oracle_cap);
    res.t_assembly = seconds_since(t0);
    t0 = Clock::now();
    const Eigen::PartialPivLU<Mat> lu(a);
    res.t_factor = seconds_since(t0);
    t0 = Clock::now();
    x = lu.solve(b);
    res.t_solve = seconds_since(t0);
    res.error_kind = "residual";
    res.error_value = (a * x - b).norm() / b.norm();
    return res;
  }

  auto t0 = Clock::now();
  const Tree tree = build_tree(points, cfg.n_max);
  if (cfg.solver == SolverKind::aifmm) {
    OperatorSet ops = build_operators(tree, kernel, cfg.eps_a);
    res.t_assembly = seconds_since(t0);
    t0 = Clock::now();
    FactorOptions fo;
    fo.eps = cfg.eps_a;
    fo.strategy = cfg.strategy;
    const Factorization fact = factorize(tree, std::move(ops), fo);
    res.t_factor = seconds_since(t0);
    t0 = Clock::now();
    x = solve(fact, b);
    res.t_solve = seconds_since(t0);
    res.max_rank = fact.stats.max_rank;
  } else {
    const OperatorSet ops = build_operators(tree, kernel, cfg.eps_g);
    res.t_assembly = seconds_since(t0);
    t0 = Clock::now();
    Preconditioner pre;
    if (cfg.precond == PrecondKind::block_diagonal) pre = block_diagonal_precond(tree, kernel);
    if (cfg.precond == PrecondKind::aifmm) pre = aifmm_precond(tree, kernel, cfg.eps_precond);
    res.t_factor = seconds_since(t0);
    t0 = Clock::now();
    GmresConfig gc;
    gc.tol = cfg.eps_gmres;
    gc.max_iter = cfg.max_iter;
    const GmresResult g = gmres([&](const Vec& v) { return h2_matvec(ops, tree, v); }, b, gc, pre);
    res.t_solve = seconds_since(t0);
    res.iterations = g.iterations;
    res.max_rank = ops.max_rank();
    x = g.x;
  }

  if (cfg.n <= cfg.oracle_cap) {
    const Mat a = dense_matrix(kernel, cfg.oracle_cap);
    const Vec reference = Eigen::PartialPivLU<Mat>(a).solve(b);
    res.error_kind = "forward";
    res.error_value = (x - reference).norm() / reference.norm();
  } else {
    const OperatorSet fine = build_operators(tree, kernel, kResidualMatvecEps);
    res.error_kind = "residual";
    res.error_value = (h2_matvec(fine, tree, x) - b).norm() / b.norm();
  }
  return res;
}

std::string csv_header() {
  return "kernel,N,nmax,eps_a,solver,precond,T_assembly_s,T_factor_s,T_solve_s,r_m,iters,error_kind,error_value,seed";
}

std::string csv_row(const RunConfig& cfg, const RunResult& res) {
  std::ostringstream os;
  os.precision(6);
  os << kernel_name(cfg.kernel) << ',' << cfg.n << ',' << cfg.n_max << ',' << cfg.eps_a << ','
     << solver_name(cfg.solver) << ',' << precond_name(cfg.precond) << ',' << res.t_assembly << ','
     << res.t_factor << ',' << res.t_solve << ',' << res.max_rank << ',' << res.iterations << ','
     << res.error_kind << ',' << res.error_value << ',' << cfg.seed;
  return os.str();
}

}  // namespace aifmm
