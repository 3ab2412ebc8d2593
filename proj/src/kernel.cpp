#include "aifmm/kernel.hpp"

#include <cmath>
#include <string>

#include <boost/math/special_functions/bessel.hpp>

namespace aifmm {

KernelSpec KernelSpec::laplace(Index n) { return {KernelKind::laplace2d_reg, 1.0, n, 0.0}; }

KernelSpec KernelSpec::helmholtz(Index n, double wavenumber) {
  if (!(wavenumber > 0.0)) throw Error("wavenumber must be positive");
  return {KernelKind::helmholtz2d_reg, wavenumber, n, 0.0};
}

KernelSpec KernelSpec::fredholm(Index n, double mesh_width) {
  if (!(mesh_width > 0.0)) throw Error("mesh width must be positive");
  return {KernelKind::fredholm_log, 1.0, n, mesh_width};
}

const char* kernel_name(KernelKind kind) {
  switch (kind) {
    case KernelKind::laplace2d_reg: return "laplace";
    case KernelKind::helmholtz2d_reg: return "helmholtz";
    case KernelKind::fredholm_log: return "fredholm";
  }
  return "?";
}

KernelKind parse_kernel(const std::string& name) {
  if (name == "laplace") return KernelKind::laplace2d_reg;
  if (name == "helmholtz") return KernelKind::helmholtz2d_reg;
  if (name == "fredholm") return KernelKind::fredholm_log;
  throw Error("unknown kernel: " + name);
}

Complex hankel0(double x) {
  return {boost::math::cyl_bessel_j(0, x), boost::math::cyl_neumann(0, x)};
}

namespace {

Complex diagonal_value(const KernelSpec& spec) {
  switch (spec.kind) {
    case KernelKind::laplace2d_reg:
    case KernelKind::helmholtz2d_reg:
      return std::sqrt(1000.0 * static_cast<double>(spec.n));
    case KernelKind::fredholm_log: {
      const double h = spec.mesh_width;
      // Cell-averaged logarithm over an h x h square is about log(h) - 3/2.
      return 1.0 + h * h * (std::log(h) - 1.5);
    }
  }
  return 0.0;
}

Complex off_diagonal(const KernelSpec& spec, double r) {
  switch (spec.kind) {
    case KernelKind::laplace2d_reg: return 1.0 / r;
    case KernelKind::helmholtz2d_reg: return Complex(0.0, 0.25) * hankel0(spec.wavenumber * r);
    case KernelKind::fredholm_log: return spec.mesh_width * spec.mesh_width * std::log(r);
  }
  return 0.0;
}

double distance(const PointCloud& points, Index i, Index j) {
  return (points.targets.col(i) - points.sources.col(j)).norm();
}

}  // namespace

Complex entry(const KernelSpec& spec, const PointCloud& points, Index i, Index j) {
  if (i == j) return diagonal_value(spec);
  const double r = distance(points, i, j);
  if (r == 0.0) throw Error("singular entry");
  return off_diagonal(spec, r);
}

KernelMatrix::KernelMatrix(KernelSpec spec, const PointCloud& points)
    : spec_(spec), points_(&points), diagonal_(diagonal_value(spec)) {
  if (spec_.n < 1) throw Error("kernel size must be positive");
}

Complex KernelMatrix::operator()(Index i, Index j) const {
  if (i == j) return diagonal_;
  const double r = distance(*points_, i, j);
  if (r == 0.0) throw Error("singular entry");
  return off_diagonal(spec_, r);
}

Mat KernelMatrix::block(const IndexList& rows, const IndexList& cols) const {
  Mat out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (Index c = 0; c < out.cols(); ++c)
    for (Index r = 0; r < out.rows(); ++r) out(r, c) = (*this)(rows[r], cols[c]);
  return out;
}

Mat dense_matrix(const KernelMatrix& kernel, Index cap, Exec exec) {
  const Index n = kernel.size();
  if (n > cap) throw Error("oracle too large");
  Mat a(n, n);
  if (exec == Exec::serial) {
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i) a(i, j) = kernel(i, j);
    return a;
  }
  // Exceptions cannot cross the parallel region; record the first failure instead.
  bool singular = false;
#pragma omp parallel for schedule(static) reduction(|| : singular)
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      if (i != j && distance(kernel.points(), i, j) == 0.0) {
        singular = true;
        continue;
      }
      a(i, j) = kernel(i, j);
    }
  }
  if (singular) throw Error("singular entry");
  return a;
}

}  // namespace aifmm
