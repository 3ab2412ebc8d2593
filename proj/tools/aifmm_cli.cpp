#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "aifmm/driver.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Fast direct and iterative solvers for dense kernel systems"};
  aifmm::RunConfig cfg;
  std::string kernel = "laplace";
  std::string solver = "aifmm";
  std::string precond = "none";
  std::string grid;
  std::string rhs = "random";
  std::string strategy = "efficient";
  std::string csv_path;
  long long n = cfg.n;
  long long n_max = cfg.n_max;
  long long oracle_cap = cfg.oracle_cap;
  long long max_iter = cfg.max_iter;

  app.add_option("--kernel", kernel, "laplace | helmholtz | fredholm")
      ->check(CLI::IsMember({"laplace", "helmholtz", "fredholm"}));
  app.add_option("--n", n, "number of points")->check(CLI::PositiveNumber);
  app.add_option("--nmax", n_max, "maximum points per leaf")->check(CLI::PositiveNumber);
  app.add_option("--eps-a", cfg.eps_a, "direct solver tolerance")->check(CLI::Range(1e-16, 0.999));
  app.add_option("--eps-g", cfg.eps_g, "H2 matvec tolerance for GMRES")->check(CLI::Range(1e-16, 0.999));
  app.add_option("--eps-gmres", cfg.eps_gmres, "GMRES relative residual target")->check(CLI::Range(1e-16, 0.999));
  app.add_option("--eps-precond", cfg.eps_precond, "tolerance of the AIFMM preconditioner")
      ->check(CLI::Range(1e-16, 0.999));
  app.add_option("--solver", solver, "aifmm | gmres | oracle")->check(CLI::IsMember({"aifmm", "gmres", "oracle"}));
  app.add_option("--precond", precond, "none | bd | aifmm")->check(CLI::IsMember({"none", "bd", "aifmm"}));
  app.add_option("--strategy", strategy, "naive | efficient")->check(CLI::IsMember({"naive", "efficient"}));
  app.add_option("--rhs", rhs, "random | ones")->check(CLI::IsMember({"random", "ones"}));
  app.add_option("--seed", cfg.seed, "random seed");
  app.add_option("--csv", csv_path, "append the result row to this file");
  app.add_option("--grid", grid, "random | tensor (fredholm defaults to tensor)")
      ->check(CLI::IsMember({"random", "tensor"}));
  app.add_option("--oracle-cap", oracle_cap, "largest N for dense reference solves")->check(CLI::PositiveNumber);
  app.add_option("--kappa", cfg.wavenumber, "Helmholtz wavenumber");
  app.add_option("--max-iter", max_iter, "GMRES iteration cap")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  try {
    cfg.kernel = aifmm::parse_kernel(kernel);
    cfg.solver = aifmm::parse_solver(solver);
    cfg.precond = aifmm::parse_precond(precond);
    cfg.strategy = strategy == "naive" ? aifmm::Strategy::naive : aifmm::Strategy::efficient;
    cfg.rhs = rhs == "ones" ? aifmm::RhsKind::ones : aifmm::RhsKind::random;
    if (grid.empty()) grid = cfg.kernel == aifmm::KernelKind::fredholm_log ? "tensor" : "random";
    cfg.grid = aifmm::parse_grid(grid);
    cfg.n = n;
    cfg.n_max = n_max;
    cfg.oracle_cap = oracle_cap;
    cfg.max_iter = max_iter;
    if (cfg.solver != aifmm::SolverKind::gmres && cfg.precond != aifmm::PrecondKind::none)
      throw aifmm::Error("--precond only applies to --solver gmres");

    const aifmm::RunResult res = aifmm::run(cfg);
    const std::string row = aifmm::csv_row(cfg, res);
    if (!csv_path.empty()) {
      const bool fresh = !std::filesystem::exists(csv_path) || std::filesystem::file_size(csv_path) == 0;
      std::ofstream out(csv_path, std::ios::app);
      if (!out) throw aifmm::Error("cannot open " + csv_path);
      if (fresh) out << aifmm::csv_header() << '\n';
      out << row << '\n';
    }
    std::cout << aifmm::csv_header() << '\n' << row << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
