#include <random>
#include <sstream>

#include "aifmm/driver.hpp"
#include "aifmm/iterative.hpp"
#include "aifmm/solve.hpp"
#include "doctest.h"

using namespace aifmm;

namespace {

Mat random_mat(Index m, Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Mat a(m, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < m; ++i) a(i, j) = Complex(g(rng), g(rng));
  return a;
}

LinearOperator dense_op(const Mat& a) {
  return [&a](const Vec& v) { return Vec(a * v); };
}

}  // namespace

TEST_CASE("identity converges in one step") {
  const Vec b = make_rhs(RhsKind::random, 50, 1);
  GmresConfig cfg;
  const GmresResult r = gmres([](const Vec& v) { return v; }, b, cfg);
  CHECK(r.converged);
  CHECK(r.iterations == 1);
  CHECK((r.x - b).norm() <= 1e-14 * b.norm());
}

TEST_CASE("dense system with a known solution") {
  const Mat a = random_mat(100, 100, 2) + 20.0 * Mat::Identity(100, 100);
  const Vec x_true = random_mat(100, 1, 3);
  const Vec b = a * x_true;
  GmresConfig cfg;
  cfg.tol = 1e-12;
  const GmresResult r = gmres(dense_op(a), b, cfg);
  CHECK(r.converged);
  CHECK((r.x - x_true).norm() <= 1e-10 * x_true.norm());
  CHECK(r.history.size() == static_cast<std::size_t>(r.iterations) + 1);
  CHECK(r.history.front() == 1.0);
  for (std::size_t k = 1; k < r.history.size(); ++k) CHECK(r.history[k] <= r.history[k - 1] * (1 + 1e-12));

  cfg.restart = 10;
  const GmresResult restarted = gmres(dense_op(a), b, cfg);
  CHECK(restarted.converged);
  CHECK((restarted.x - x_true).norm() <= 1e-9 * x_true.norm());

  std::ostringstream csv;
  write_history_csv(r, csv);
  CHECK(csv.str().rfind("iteration,relative_residual\n0,1\n", 0) == 0);
}

TEST_CASE("gmres edge cases") {
  const Mat a = Mat::Identity(5, 5);
  GmresConfig cfg;
  const GmresResult zero = gmres(dense_op(a), Vec::Zero(5), cfg);
  CHECK(zero.converged);
  CHECK(zero.iterations == 0);
  CHECK(zero.x.norm() == 0.0);
  cfg.tol = 0.0;
  CHECK_THROWS_AS(gmres(dense_op(a), Vec::Ones(5), cfg), Error);

  GmresConfig capped;
  capped.max_iter = 3;
  const Mat hard = random_mat(60, 60, 4);
  const GmresResult r = gmres(dense_op(hard), Vec::Ones(60), capped);
  CHECK(!r.converged);
  CHECK(r.iterations == 3);
}

TEST_CASE("block-diagonal preconditioner is exact on a block-diagonal operator") {
  const PointCloud pts = make_points(GridKind::random, 200, 5);
  const KernelMatrix k(KernelSpec::laplace(200), pts);
  const Tree t = build_tree(pts, 16);
  Mat a = Mat::Zero(200, 200);
  for (const auto& leaf : t.levels[t.depth]) a(leaf.t_idx, leaf.s_idx) = k.block(leaf.t_idx, leaf.s_idx);
  const Preconditioner p = block_diagonal_precond(t, k);
  CHECK(p.kind() == PrecondKind::block_diagonal);
  const Vec v = make_rhs(RhsKind::random, 200, 6);
  CHECK((a * p.apply(v) - v).norm() <= 1e-12 * v.norm());
  GmresConfig cfg;
  const GmresResult r = gmres(dense_op(a), v, cfg, p);
  CHECK(r.iterations == 1);
}

TEST_CASE("block-diagonal preconditioner inverts each leaf block") {
  const PointCloud pts = make_points(GridKind::random, 1024, 7);
  const KernelMatrix k(KernelSpec::laplace(1024), pts);
  const Tree t = build_tree(pts, 32);
  const Preconditioner p = block_diagonal_precond(t, k);
  const Vec v = make_rhs(RhsKind::random, 1024, 8);
  const Vec w = p.apply(v);
  for (const auto& leaf : t.levels[t.depth]) {
    if (leaf.t_idx.empty()) continue;
    Vec local(static_cast<Index>(leaf.s_idx.size()));
    Vec rhs(static_cast<Index>(leaf.t_idx.size()));
    for (std::size_t q = 0; q < leaf.s_idx.size(); ++q) local(q) = w(leaf.s_idx[q]);
    for (std::size_t q = 0; q < leaf.t_idx.size(); ++q) rhs(q) = v(leaf.t_idx[q]);
    CHECK((k.block(leaf.t_idx, leaf.s_idx) * local - rhs).norm() <= 1e-12 * rhs.norm());
  }
  CHECK(p.apply(v) == w);
}

TEST_CASE("aifmm preconditioner accelerates gmres") {
  const Index n = 2048;
  const PointCloud pts = make_points(GridKind::random, n, 9);
  const KernelMatrix k(KernelSpec::helmholtz(n), pts);
  const Tree t = build_tree(pts, 32);
  const OperatorSet ops = build_operators(t, k, 1e-10);
  const LinearOperator h2 = [&](const Vec& v) { return h2_matvec(ops, t, v); };
  const Vec b = make_rhs(RhsKind::random, n, 10);
  GmresConfig cfg;
  cfg.tol = 1e-8;

  const GmresResult plain = gmres(h2, b, cfg);
  const GmresResult bd = gmres(h2, b, cfg, block_diagonal_precond(t, k));
  const Preconditioner strong = Preconditioner::aifmm(t, k, 1e-9);
  const GmresResult pre = gmres(h2, b, cfg, strong);
  const GmresResult coarse = gmres(h2, b, cfg, aifmm_precond(t, k, 1e-3));
  CHECK(plain.converged);
  CHECK(pre.converged);
  CHECK(pre.iterations <= 2);
  CHECK(coarse.iterations < plain.iterations);
  CHECK(bd.iterations <= plain.iterations);
  CHECK((h2(pre.x) - b).norm() <= 1e-7 * b.norm());
  REQUIRE(strong.factorization() != nullptr);
  CHECK(strong.apply(b) == solve(*strong.factorization(), b));
}

TEST_CASE("preconditioner names round-trip") {
  for (auto kind : {PrecondKind::none, PrecondKind::block_diagonal, PrecondKind::aifmm})
    CHECK(parse_precond(precond_name(kind)) == kind);
  CHECK_THROWS_AS(parse_precond("ilu"), Error);
  const Vec v = Vec::Ones(3);
  CHECK(Preconditioner().apply(v) == v);
}
