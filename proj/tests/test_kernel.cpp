#include <cmath>
#include <numbers>

#include "aifmm/driver.hpp"
#include "aifmm/kernel.hpp"
#include "doctest.h"

using namespace aifmm;

namespace {

// Power series for J0 and Y0 in extended precision.
std::pair<long double, long double> bessel_series(long double x) {
  const long double q = x * x / 4;
  long double term = 1, j0 = 1, y_sum = 0, harmonic = 0;
  for (int k = 1; k < 200; ++k) {
    term *= -q / (static_cast<long double>(k) * k);
    harmonic += 1.0L / k;
    j0 += term;
    y_sum -= harmonic * term;
    if (std::fabs(term) < 1e-30L) break;
  }
  const long double euler = 0.5772156649015328606065120900824024L;
  const long double pi = 3.1415926535897932384626433832795029L;
  const long double y0 = 2 / pi * ((std::log(x / 2) + euler) * j0 + y_sum);
  return {j0, y0};
}

PointCloud two_points(double r) {
  Eigen::MatrixXd m(2, 2);
  m << 0.0, r, 0.0, 0.0;
  return PointCloud::coincident(m);
}

}  // namespace

TEST_CASE("bessel oracle agrees with tabulated values") {
  const double table[][3] = {{1, 0.7651976865579666, 0.08825696421567696},
                             {2, 0.2238907791412357, 0.5103756726497451},
                             {5, -0.1775967713143383, -0.3085176252490338},
                             {10, -0.2459357644513483, 0.05567116728359939}};
  for (const auto& row : table) {
    const auto [j0, y0] = bessel_series(row[0]);
    CHECK(static_cast<double>(j0) == doctest::Approx(row[1]).epsilon(1e-14));
    CHECK(static_cast<double>(y0) == doctest::Approx(row[2]).epsilon(1e-14));
    const Complex h = hankel0(row[0]);
    CHECK(h.real() == doctest::Approx(row[1]).epsilon(1e-13));
    CHECK(h.imag() == doctest::Approx(row[2]).epsilon(1e-13));
  }
}

TEST_CASE("hankel accuracy over the working range") {
  for (double e = -8; e <= 1.0; e += 0.05) {
    const double x = std::pow(10.0, e);
    const auto [j0, y0] = bessel_series(x);
    const Complex ref(static_cast<double>(j0), static_cast<double>(y0));
    CHECK(std::abs(hankel0(x) - ref) <= 1e-13 * std::abs(ref));
  }
}

TEST_CASE("laplace entries") {
  const Eigen::MatrixXd one = Eigen::MatrixXd::Zero(2, 1);
  const PointCloud single = PointCloud::coincident(one);
  CHECK(entry(KernelSpec::laplace(4900), single, 0, 0).real() == doctest::Approx(2213.594362117866));
  CHECK(entry(KernelSpec::laplace(4900), single, 0, 0).imag() == 0.0);
  const PointCloud pair = two_points(2.0);
  CHECK(entry(KernelSpec::laplace(2), pair, 0, 1) == Complex(0.5, 0.0));

  const Mat a = dense_matrix(KernelMatrix(KernelSpec::laplace(1), single));
  CHECK(a.rows() == 1);
  CHECK(a(0, 0).real() == doctest::Approx(std::sqrt(1000.0)));
}

TEST_CASE("helmholtz entry matches the bessel oracle") {
  const PointCloud pair = two_points(1.0);
  const auto [j0, y0] = bessel_series(1.0L);
  const Complex expected = Complex(0, 0.25) * Complex(static_cast<double>(j0), static_cast<double>(y0));
  const Complex got = entry(KernelSpec::helmholtz(2), pair, 0, 1);
  CHECK(std::abs(got - expected) <= 1e-14);
  CHECK(entry(KernelSpec::helmholtz(2), pair, 1, 1) == Complex(std::sqrt(2000.0), 0));
}

TEST_CASE("fredholm entries") {
  const double h = 0.1;
  const PointCloud pair = two_points(0.5);
  const KernelSpec spec = KernelSpec::fredholm(2, h);
  CHECK(entry(spec, pair, 0, 1).real() == doctest::Approx(h * h * std::log(0.5)));
  CHECK(entry(spec, pair, 0, 0).real() == doctest::Approx(1 + h * h * std::log(h * std::exp(-1.5))));
}

TEST_CASE("coincident distinct points are rejected") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
  CHECK_THROWS_WITH_AS(entry(KernelSpec::laplace(2), PointCloud::coincident(m), 0, 1), "singular entry", Error);
}

TEST_CASE("dense matrix") {
  const PointCloud sym = two_points(0.25);
  const Mat s = dense_matrix(KernelMatrix(KernelSpec::laplace(2), sym));
  CHECK(s(0, 1) == s(1, 0));

  const PointCloud pts = make_points(GridKind::random, 100, 1);
  for (auto spec : {KernelSpec::laplace(100), KernelSpec::helmholtz(100), KernelSpec::fredholm(100, 0.2)}) {
    const KernelMatrix k(spec, pts);
    const Mat par = dense_matrix(k, 8192, Exec::parallel);
    const Mat ser = dense_matrix(k, 8192, Exec::serial);
    CHECK(par == ser);
    double worst = 0;
    for (Index i = 0; i < 100; ++i)
      for (Index j = 0; j < 100; ++j) worst = std::max(worst, std::abs(par(i, j) - entry(spec, pts, i, j)));
    CHECK(worst == 0.0);
  }
  const Mat lap = dense_matrix(KernelMatrix(KernelSpec::laplace(100), pts));
  CHECK(lap == lap.transpose());
  CHECK_THROWS_WITH_AS(dense_matrix(KernelMatrix(KernelSpec::laplace(100), pts), 50), "oracle too large", Error);
}

TEST_CASE("entries are bitwise repeatable") {
  const PointCloud pts = make_points(GridKind::random, 10, 4);
  const KernelSpec spec = KernelSpec::helmholtz(10);
  for (Index i = 0; i < 10; ++i)
    for (Index j = 0; j < 10; ++j) CHECK(entry(spec, pts, i, j) == entry(spec, pts, i, j));
}

TEST_CASE("kernel names round-trip") {
  for (auto k : {KernelKind::laplace2d_reg, KernelKind::helmholtz2d_reg, KernelKind::fredholm_log})
    CHECK(parse_kernel(kernel_name(k)) == k);
  CHECK_THROWS_AS(parse_kernel("yukawa"), Error);
}
