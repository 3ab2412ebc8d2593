#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "aifmm/driver.hpp"
#include "aifmm/solve.hpp"

using namespace aifmm;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

constexpr Index kLeafSize = 64;
constexpr std::uint64_t kSeed = 42;

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

class Reporter {
 public:
  explicit Reporter(std::optional<std::string> path) {
    if (path) file_.open(*path);
  }
  void line(int id, const std::string& title, bool pass, const std::string& detail) {
    const std::string text =
        fmt("criterion %2d %-28s %s  %s", id, (title + ":").c_str(), pass ? "PASS" : "FAIL", detail.c_str());
    std::cout << text << std::endl;
    if (file_) file_ << text << '\n' << std::flush;
    failed_ += pass ? 0 : 1;
  }
  void note(const std::string& text) {
    std::cout << "  " << text << std::endl;
    if (file_) file_ << "  " << text << '\n' << std::flush;
  }
  int failed() const { return failed_; }

 private:
  std::ofstream file_;
  int failed_ = 0;
};

struct Problem {
  PointCloud points;
  KernelMatrix kernel;
  Tree tree;
  Vec b;
  Problem(KernelKind kind, Index n, GridKind grid)
      : points(make_points(grid, n, kSeed)),
        kernel(make_kernel(kind, n), points),
        tree(build_tree(points, kLeafSize)),
        b(make_rhs(RhsKind::random, n, kSeed)) {}
};

GridKind grid_for(KernelKind kind) { return kind == KernelKind::fredholm_log ? GridKind::tensor : GridKind::random; }

Vec dense_solution(const Problem& p) { return dense_matrix(p.kernel).partialPivLu().solve(p.b); }

double rel(const Vec& x, const Vec& ref) { return (x - ref).norm() / ref.norm(); }

struct AifmmRun {
  Vec x;
  Factorization fact;
  double t_factor = 0.0;
};

AifmmRun aifmm_run(const Problem& p, const FactorOptions& opts) {
  OperatorSet ops = build_operators(p.tree, p.kernel, opts.eps);
  AifmmRun r;
  const auto t0 = Clock::now();
  r.fact = factorize(p.tree, std::move(ops), opts);
  r.t_factor = since(t0);
  r.x = solve(r.fact, p.b);
  return r;
}

FactorOptions with_eps(double eps, Strategy s = Strategy::efficient) {
  FactorOptions o;
  o.eps = eps;
  o.strategy = s;
  return o;
}

// Shared N = 4096 Laplace problem and its dense reference solution.
struct Laplace4096 {
  Problem problem{KernelKind::laplace2d_reg, 4096, GridKind::random};
  Vec reference = dense_solution(problem);
};

Laplace4096& laplace4096() {
  static Laplace4096 shared;
  return shared;
}

void oracle_equivalence(Reporter& rep) {
  double worst = 0.0;
  std::string worst_case;
  for (KernelKind kind : {KernelKind::laplace2d_reg, KernelKind::helmholtz2d_reg, KernelKind::fredholm_log}) {
    for (Index n : {256, 1024, 4096}) {
      const bool shared = kind == KernelKind::laplace2d_reg && n == 4096;
      std::optional<Problem> local;
      if (!shared) local.emplace(kind, n, grid_for(kind));
      const Problem& p = shared ? laplace4096().problem : *local;
      const Vec ref = shared ? laplace4096().reference : dense_solution(p);
      const double err = rel(aifmm_run(p, with_eps(1e-10)).x, ref);
      rep.note(fmt("%s N=%ld forward error %.3e", kernel_name(kind), static_cast<long>(n), err));
      if (err > worst) {
        worst = err;
        worst_case = fmt("%s N=%ld", kernel_name(kind), static_cast<long>(n));
      }
    }
  }
  rep.line(1, "oracle equivalence", worst <= 1e-7, fmt("worst forward error %.3e (%s), limit 1e-7", worst, worst_case.c_str()));
}

void convergence_in_eps(Reporter& rep) {
  const auto& s = laplace4096();
  std::vector<double> errs;
  bool pass = true;
  std::string detail;
  for (double eps : {1e-4, 1e-7, 1e-10}) {
    const double err = rel(aifmm_run(s.problem, with_eps(eps)).x, s.reference);
    pass = pass && err <= 1000 * eps && (errs.empty() || err < errs.back());
    errs.push_back(err);
    detail += fmt("eps %.0e -> %.3e; ", eps, err);
  }
  rep.line(2, "convergence in eps", pass, detail + "need strictly decreasing and <= 1000*eps");
}

void strategies_and_redirection(Reporter& rep) {
  const double eps = 1e-10;
  const auto& s = laplace4096();
  FactorOptions naive = with_eps(eps, Strategy::naive);
  FactorOptions efficient = with_eps(eps, Strategy::efficient);
  naive.check_compressions = efficient.check_compressions = true;
  const AifmmRun rn = aifmm_run(s.problem, naive);
  const AifmmRun re = aifmm_run(s.problem, efficient);

  const double gap = rel(rn.x, re.x);
  const Index calls_n = rn.fact.stats.rrqr_calls;
  const Index calls_e = re.fact.stats.rrqr_calls;
  rep.line(3, "naive vs efficient", gap <= 10 * eps && calls_e <= calls_n,
           fmt("solution gap %.3e (limit %.0e), rrqr calls efficient %ld <= naive %ld", gap, 10 * eps,
               static_cast<long>(calls_e), static_cast<long>(calls_n)));

  std::size_t total = 0, good = 0;
  double worst = 0.0;
  std::array<std::size_t, 3> per_kind{};
  for (const auto* run : {&rn, &re}) {
    for (const auto& c : run->fact.stats.checks) {
      ++total;
      ++per_kind[static_cast<int>(c.kind)];
      worst = std::max(worst, c.relative_error);
      if (c.relative_error <= 10 * eps) ++good;
    }
  }
  rep.line(4, "redirection exactness", total > 0 && good == total,
           fmt("%zu/%zu compressions within 10*eps (p2p %zu, p2l %zu, m2p %zu), worst %.3e", good, total, per_kind[0],
               per_kind[1], per_kind[2], worst));
}

void fill_in_rank(Reporter& rep) {
  const Problem p(KernelKind::laplace2d_reg, 8192, GridKind::random);
  FactorOptions opts = with_eps(1e-10, Strategy::naive);
  opts.record_fill_ranks = true;
  opts.fill_rank_tol = 1e-10;
  const Factorization f = factorize(p.tree, build_operators(p.tree, p.kernel, opts.eps), opts);
  std::size_t within = 0;
  double worst = 0.0, mean = 0.0;
  for (const auto& s : f.stats.fill_ranks) {
    const double ratio = static_cast<double>(s.rank) / static_cast<double>(std::min(s.rows, s.cols));
    worst = std::max(worst, ratio);
    mean += ratio;
    within += ratio <= 0.4 ? 1 : 0;
  }
  const std::size_t count = f.stats.fill_ranks.size();
  if (count > 0) mean /= static_cast<double>(count);
  rep.line(5, "leaf fill-in rank", count > 0 && within == count,
           fmt("N=8192 depth %d: %zu/%zu blocks at <= 40%% of min dim, worst %.2f, mean %.2f", p.tree.depth, within,
               count, worst, mean));
}

void scaling_and_multi_rhs(Reporter& rep) {
  std::vector<Index> sizes = {4096, 8192, 16384, 32768};
  std::vector<double> times;
  std::vector<Index> ranks;
  bool multi_rhs_done = false;
  for (Index n : sizes) {
    Problem p(KernelKind::laplace2d_reg, n, GridKind::random);
    OperatorSet ops = build_operators(p.tree, p.kernel, 1e-10);
    auto t0 = Clock::now();
    Factorization f = factorize(p.tree, std::move(ops), with_eps(1e-10));
    times.push_back(since(t0));
    ranks.push_back(f.stats.max_rank);
    rep.note(fmt("N=%ld depth %d T_factor %.2f s r_m %ld", static_cast<long>(n), p.tree.depth, times.back(),
                 static_cast<long>(ranks.back())));
    if (n == 16384) {
      const int repeats = 4;
      t0 = Clock::now();
      for (int k = 0; k < repeats; ++k) {
        const Vec x = solve(f, make_rhs(RhsKind::random, n, kSeed + k));
        if (!x.allFinite()) throw Error("non-finite solve");
      }
      const double per_rhs = since(t0) / repeats;
      rep.line(7, "multi-rhs advantage", per_rhs <= 0.1 * times.back(),
               fmt("N=16384 solve %.3f s per rhs vs factor %.2f s (ratio %.4f, limit 0.1)", per_rhs, times.back(),
                   per_rhs / times.back()));
      multi_rhs_done = true;
    }
  }
  bool pass = true;
  std::string detail;
  for (std::size_t k = 1; k < sizes.size(); ++k) {
    const double t_ratio = times[k] / times[k - 1];
    const double growth = static_cast<double>(ranks[k]) / static_cast<double>(ranks[k - 1]) - 1.0;
    pass = pass && t_ratio <= 2.8 && growth <= 0.2;
    detail += fmt("%ld->%ld: T x%.2f r_m %+.0f%%; ", static_cast<long>(sizes[k - 1]), static_cast<long>(sizes[k]),
                  t_ratio, 100 * growth);
  }
  rep.line(6, "scaling", pass, detail + "limits T x2.8, r_m +20%");
  if (!multi_rhs_done) rep.line(7, "multi-rhs advantage", false, "N=16384 not reached");
}

void preconditioner_ordering(Reporter& rep) {
  const auto& s = laplace4096();
  const Problem& p = s.problem;
  const OperatorSet ops = build_operators(p.tree, p.kernel, 1e-10);
  const LinearOperator h2 = [&](const Vec& v) { return h2_matvec(ops, p.tree, v); };
  GmresConfig cfg;
  cfg.tol = 1e-10;
  cfg.max_iter = 2000;
  const GmresResult none = gmres(h2, p.b, cfg);
  const GmresResult bd = gmres(h2, p.b, cfg, block_diagonal_precond(p.tree, p.kernel));
  const GmresResult pa = gmres(h2, p.b, cfg, aifmm_precond(p.tree, p.kernel, 1e-4));
  double spread = 0.0;
  for (const auto* a : {&none, &bd, &pa})
    for (const auto* b : {&none, &bd, &pa}) spread = std::max(spread, rel(a->x, b->x));
  const bool order = pa.iterations < bd.iterations && bd.iterations <= none.iterations;
  rep.line(8, "preconditioner ordering", order && spread <= 1e-8 && none.converged && bd.converged && pa.converged,
           fmt("iterations aifmm %ld < block-diag %ld <= none %ld; forward errors %.2e %.2e %.2e, max pairwise gap %.2e "
               "(limit 1e-8)",
               static_cast<long>(pa.iterations), static_cast<long>(bd.iterations), static_cast<long>(none.iterations),
               rel(pa.x, s.reference), rel(bd.x, s.reference), rel(none.x, s.reference), spread));
}

void matvec_fidelity(Reporter& rep) {
  const double eps = 1e-10;
  const Problem p(KernelKind::laplace2d_reg, 2048, GridKind::random);
  const OperatorSet ops = build_operators(p.tree, p.kernel, eps);
  const Mat a = dense_matrix(p.kernel);
  std::mt19937_64 rng(kSeed);
  std::normal_distribution<double> g;
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    Vec q(2048);
    for (Index k = 0; k < 2048; ++k) q(k) = Complex(g(rng), g(rng));
    const Vec exact = a * q;
    worst = std::max(worst, (h2_matvec(ops, p.tree, q) - exact).norm() / exact.norm());
  }
  rep.line(9, "h2 matvec fidelity", worst <= 100 * eps, fmt("worst of 10 at N=2048: %.3e, limit %.0e", worst, 100 * eps));
}

void headless_suites(Reporter& rep) {
  std::istringstream names(AIFMM_UNIT_TESTS);
  std::string name;
  int total = 0, ok = 0;
  std::string failed;
  while (names >> name) {
    ++total;
    const std::string cmd = std::string(AIFMM_TEST_BIN_DIR) + "/test_" + name + " --no-colors=true > /dev/null 2>&1";
    if (std::system(cmd.c_str()) == 0)
      ++ok;
    else
      failed += " " + name;
  }
  rep.line(10, "headless property suites", total > 0 && ok == total,
           fmt("%d/%d suites passed without input files or network%s%s", ok, total, failed.empty() ? "" : "; failed:",
               failed.c_str()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks for the AIFMM solver"};
  std::optional<std::string> report;
  std::vector<int> only;
  app.add_option("--report", report, "Also write the results to this file");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  auto want = [&](std::initializer_list<int> ids) {
    return only.empty() || std::any_of(ids.begin(), ids.end(), [&](int id) {
             return std::find(only.begin(), only.end(), id) != only.end();
           });
  };

  Reporter rep(report);
  const auto t0 = Clock::now();
  try {
    if (want({9})) matvec_fidelity(rep);
    if (want({1})) oracle_equivalence(rep);
    if (want({2})) convergence_in_eps(rep);
    if (want({3, 4})) strategies_and_redirection(rep);
    if (want({8})) preconditioner_ordering(rep);
    if (want({5})) fill_in_rank(rep);
    if (want({6, 7})) scaling_and_multi_rhs(rep);
    if (want({10})) headless_suites(rep);
  } catch (const std::exception& e) {
    std::cerr << "acceptance aborted: " << e.what() << '\n';
    return 2;
  }
  rep.note(fmt("%d criteria failed, total %.0f s", rep.failed(), since(t0)));
  // Failed criteria are reported above; a nonzero exit is reserved for runs that could not complete.
  return 0;
}
