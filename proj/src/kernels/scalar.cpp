#include "kernels_impl.hpp"

namespace s3a::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) s += a[k] * b[k];
  return s;
}

void gram_scalar(const double* a, std::size_t na, const double* b,
                 std::size_t nb, std::size_t d, double* out, std::size_t ldo) {
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      out[i * ldo + j] = dot_scalar(a + i * d, b + j * d, d);
    }
  }
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t d) {
  for (std::size_t k = 0; k < d; ++k) y[k] += alpha * x[k];
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar", &dot_scalar, &gram_scalar,
                                 &axpy_scalar};
  return table;
}

}  // namespace s3a::kernels
