#include "biasner/kernels.hpp"

namespace biasner::kernels {
namespace {

double dot_scalar(const double* a, const double* b, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(double alpha, double* x, size_t n) {
  for (size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void gemv_scalar(const double* w, const double* x, double* out, size_t rows, size_t cols) {
  for (size_t r = 0; r < rows; ++r) out[r] = dot_scalar(w + r * cols, x, cols);
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::kScalar, dot_scalar, axpy_scalar, scale_scalar, gemv_scalar};
  return table;
}

}  // namespace biasner::kernels
