// Built with -mavx2 -mfma. Nothing here may run before dispatch.cpp has
// confirmed both features on the host.
#include <immintrin.h>

#include <cmath>

#include "kernels_impl.hpp"

namespace s3a::kernels {
namespace {

// Lane layout shared by every path in this file: one 4-lane accumulator per
// (a, b) pair over full 4-element chunks, folded as (l0 + l1) + (l2 + l3),
// then the tail accumulated with fma in index order.
inline double fold(__m256d acc) {
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

inline double finish(__m256d acc, const double* a, const double* b,
                     std::size_t from, std::size_t d) {
  double s = fold(acc);
  for (std::size_t k = from; k < d; ++k) s = std::fma(a[k], b[k], s);
  return s;
}

double dot_avx2(const double* a, const double* b, std::size_t d) {
  const std::size_t full = d & ~std::size_t{3};
  __m256d acc = _mm256_setzero_pd();
  for (std::size_t k = 0; k < full; k += 4) {
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + k), _mm256_loadu_pd(b + k), acc);
  }
  return finish(acc, a, b, full, d);
}

template <int MR, int NR>
inline void micro(const double* a, const double* b, std::size_t d,
                  double* out, std::size_t ldo) {
  const std::size_t full = d & ~std::size_t{3};
  __m256d acc[MR][NR];
  for (int i = 0; i < MR; ++i)
    for (int j = 0; j < NR; ++j) acc[i][j] = _mm256_setzero_pd();

  for (std::size_t k = 0; k < full; k += 4) {
    __m256d bv[NR];
    for (int j = 0; j < NR; ++j) bv[j] = _mm256_loadu_pd(b + j * d + k);
    for (int i = 0; i < MR; ++i) {
      const __m256d av = _mm256_loadu_pd(a + i * d + k);
      for (int j = 0; j < NR; ++j) acc[i][j] = _mm256_fmadd_pd(av, bv[j], acc[i][j]);
    }
  }
  for (int i = 0; i < MR; ++i)
    for (int j = 0; j < NR; ++j)
      out[i * ldo + j] = finish(acc[i][j], a + i * d, b + j * d, full, d);
}

template <int MR>
inline void micro_rows(const double* a, const double* b, std::size_t nr,
                       std::size_t d, double* out, std::size_t ldo) {
  switch (nr) {
    case 3: micro<MR, 3>(a, b, d, out, ldo); break;
    case 2: micro<MR, 2>(a, b, d, out, ldo); break;
    default: micro<MR, 1>(a, b, d, out, ldo); break;
  }
}

void gram_avx2(const double* a, std::size_t na, const double* b,
               std::size_t nb, std::size_t d, double* out, std::size_t ldo) {
  constexpr std::size_t kMr = 4;
  constexpr std::size_t kNr = 3;
  for (std::size_t j = 0; j < nb; j += kNr) {
    const std::size_t nr = (nb - j < kNr) ? nb - j : kNr;
    const double* bj = b + j * d;
    for (std::size_t i = 0; i < na; i += kMr) {
      const std::size_t mr = (na - i < kMr) ? na - i : kMr;
      const double* ai = a + i * d;
      double* o = out + i * ldo + j;
      switch (mr) {
        case 4: micro_rows<4>(ai, bj, nr, d, o, ldo); break;
        case 3: micro_rows<3>(ai, bj, nr, d, o, ldo); break;
        case 2: micro_rows<2>(ai, bj, nr, d, o, ldo); break;
        default: micro_rows<1>(ai, bj, nr, d, o, ldo); break;
      }
    }
  }
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t d) {
  const std::size_t full = d & ~std::size_t{3};
  const __m256d av = _mm256_set1_pd(alpha);
  for (std::size_t k = 0; k < full; k += 4) {
    _mm256_storeu_pd(y + k, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + k),
                                            _mm256_loadu_pd(y + k)));
  }
  for (std::size_t k = full; k < d; ++k) y[k] = std::fma(alpha, x[k], y[k]);
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable table{"avx2", &dot_avx2, &gram_avx2, &axpy_avx2};
  return &table;
}

}  // namespace s3a::kernels
