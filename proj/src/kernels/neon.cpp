// AArch64 only; Advanced SIMD is architecturally guaranteed there.
#include <arm_neon.h>

#include <cmath>

#include "kernels_impl.hpp"

namespace s3a::kernels {
namespace {

// One 2-lane accumulator per pair over 2-element chunks, folded l0 + l1,
// tail accumulated with fma.
inline double finish(float64x2_t acc, const double* a, const double* b,
                     std::size_t from, std::size_t d) {
  double s = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
  for (std::size_t k = from; k < d; ++k) s = std::fma(a[k], b[k], s);
  return s;
}

double dot_neon(const double* a, const double* b, std::size_t d) {
  const std::size_t full = d & ~std::size_t{1};
  float64x2_t acc = vdupq_n_f64(0.0);
  for (std::size_t k = 0; k < full; k += 2) {
    acc = vfmaq_f64(acc, vld1q_f64(a + k), vld1q_f64(b + k));
  }
  return finish(acc, a, b, full, d);
}

template <int MR, int NR>
inline void micro(const double* a, const double* b, std::size_t d,
                  double* out, std::size_t ldo) {
  const std::size_t full = d & ~std::size_t{1};
  float64x2_t acc[MR][NR];
  for (int i = 0; i < MR; ++i)
    for (int j = 0; j < NR; ++j) acc[i][j] = vdupq_n_f64(0.0);

  for (std::size_t k = 0; k < full; k += 2) {
    float64x2_t bv[NR];
    for (int j = 0; j < NR; ++j) bv[j] = vld1q_f64(b + j * d + k);
    for (int i = 0; i < MR; ++i) {
      const float64x2_t av = vld1q_f64(a + i * d + k);
      for (int j = 0; j < NR; ++j) acc[i][j] = vfmaq_f64(acc[i][j], av, bv[j]);
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
    case 4: micro<MR, 4>(a, b, d, out, ldo); break;
    case 3: micro<MR, 3>(a, b, d, out, ldo); break;
    case 2: micro<MR, 2>(a, b, d, out, ldo); break;
    default: micro<MR, 1>(a, b, d, out, ldo); break;
  }
}

void gram_neon(const double* a, std::size_t na, const double* b,
               std::size_t nb, std::size_t d, double* out, std::size_t ldo) {
  constexpr std::size_t kMr = 4;
  constexpr std::size_t kNr = 4;
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

void axpy_neon(double alpha, const double* x, double* y, std::size_t d) {
  const std::size_t full = d & ~std::size_t{1};
  const float64x2_t av = vdupq_n_f64(alpha);
  for (std::size_t k = 0; k < full; k += 2) {
    vst1q_f64(y + k, vfmaq_f64(vld1q_f64(y + k), av, vld1q_f64(x + k)));
  }
  for (std::size_t k = full; k < d; ++k) y[k] = std::fma(alpha, x[k], y[k]);
}

}  // namespace

const KernelTable* neon_kernels() {
  static const KernelTable table{"neon", &dot_neon, &gram_neon, &axpy_neon};
  return &table;
}

}  // namespace s3a::kernels
