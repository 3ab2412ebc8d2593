#pragma once

#include "aifmm/tree.hpp"

namespace aifmm {

enum class KernelKind { laplace2d_reg, helmholtz2d_reg, fredholm_log };

struct KernelSpec {
  KernelKind kind = KernelKind::laplace2d_reg;
  double wavenumber = 1.0;  // multiplies r in the Hankel argument
  Index n = 1;              // system size used by the regularized diagonal
  double mesh_width = 0.0;  // quadrature spacing h; weight is h^2

  static KernelSpec laplace(Index n);
  static KernelSpec helmholtz(Index n, double wavenumber = 1.0);
  static KernelSpec fredholm(Index n, double mesh_width);
};

const char* kernel_name(KernelKind kind);
KernelKind parse_kernel(const std::string& name);

// H_0^{(1)}(x) = J_0(x) + i Y_0(x) for x > 0.
Complex hankel0(double x);

Complex entry(const KernelSpec& spec, const PointCloud& points, Index i, Index j);

// Binds a kernel to a point cloud; the entry oracle handed to NNCA and the dense oracle.
class KernelMatrix {
 public:
  KernelMatrix(KernelSpec spec, const PointCloud& points);

  Complex operator()(Index i, Index j) const;
  Mat block(const IndexList& rows, const IndexList& cols) const;
  Index size() const { return points_->size(); }
  const KernelSpec& spec() const { return spec_; }
  const PointCloud& points() const { return *points_; }

 private:
  KernelSpec spec_;
  const PointCloud* points_;
  Complex diagonal_;
};

inline constexpr Index kDefaultOracleCap = 8192;

Mat dense_matrix(const KernelMatrix& kernel, Index cap = kDefaultOracleCap, Exec exec = Exec::parallel);

}  // namespace aifmm
