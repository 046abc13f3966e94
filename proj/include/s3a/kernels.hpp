#pragma once
// Dense inner-loop kernels with a scalar reference implementation and SIMD
// variants chosen once at startup from the host CPU.
//
// Every variant guarantees that gram()(i, j) is bitwise equal to
// dot(a_i, b_j) of the same variant, whatever the block shape or row offset,
// so results do not depend on how callers tile or parallelize the work.

#include <cstddef>
#include <span>
#include <string_view>

namespace s3a::kernels {

struct KernelTable {
  const char* name;

  // sum_k a[k] * b[k] with 64-bit accumulation.
  double (*dot)(const double* a, const double* b, std::size_t d);

  // out[i * ldo + j] = dot(a + i*d, b + j*d, d) for i < na, j < nb.
  void (*gram)(const double* a, std::size_t na, const double* b,
               std::size_t nb, std::size_t d, double* out, std::size_t ldo);

  // y[k] += alpha * x[k]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t d);
};

const KernelTable& scalar_kernels();

// Every variant compiled in and supported by this CPU, scalar first.
std::span<const KernelTable* const> available();

// The variant in use. Chosen on first call: the widest available variant,
// unless S3A_KERNELS names another one.
const KernelTable& active();

// Switch the active variant by name ("scalar", "avx2", "neon"). Returns false
// if that variant is unavailable here. Not thread-safe against concurrent
// kernel use; intended for tests and startup configuration.
bool select(std::string_view name);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

}  // namespace s3a::kernels
