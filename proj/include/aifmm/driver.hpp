#pragma once

#include <cstdint>
#include <string>

#include "aifmm/iterative.hpp"

namespace aifmm {

enum class SolverKind { aifmm, gmres, oracle };
enum class GridKind { random, tensor };
enum class RhsKind { random, ones };

SolverKind parse_solver(const std::string& name);
const char* solver_name(SolverKind kind);
GridKind parse_grid(const std::string& name);

struct RunConfig {
  KernelKind kernel = KernelKind::laplace2d_reg;
  Index n = 1024;
  Index n_max = 64;
  double eps_a = 1e-10;
  double eps_g = 1e-10;       // accuracy of the H2 matvec driving GMRES
  double eps_gmres = 1e-10;
  double eps_precond = 1e-4;  // accuracy of the AIFMM preconditioner
  SolverKind solver = SolverKind::aifmm;
  PrecondKind precond = PrecondKind::none;
  Strategy strategy = Strategy::efficient;
  RhsKind rhs = RhsKind::random;
  GridKind grid = GridKind::random;
  std::uint64_t seed = 42;
  Index oracle_cap = kDefaultOracleCap;
  Index max_iter = 2000;
  double wavenumber = 1.0;
};

struct RunResult {
  double t_assembly = 0.0;
  double t_factor = 0.0;
  double t_solve = 0.0;
  Index max_rank = 0;
  Index iterations = 0;
  std::string error_kind;
  double error_value = 0.0;
};

// Uniform random points in [-1,1]^2 or a cell-centred tensor grid (n must then be a square).
PointCloud make_points(GridKind grid, Index n, std::uint64_t seed);
KernelSpec make_kernel(KernelKind kind, Index n, double wavenumber = 1.0);
Vec make_rhs(RhsKind kind, Index n, std::uint64_t seed);

RunResult run(const RunConfig& cfg);

std::string csv_header();
std::string csv_row(const RunConfig& cfg, const RunResult& res);

}  // namespace aifmm
