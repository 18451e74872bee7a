// AVX2+FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma on x86-64; callers must check cpu_has_avx2() before
// selecting the table (the dispatcher in kernels.cpp does).

#include "xpr/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

namespace xpr::kernels {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

double dot_avx2(std::size_t n, const double* x, const double* y) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i),
                           acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4),
                           _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i),
                           acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy_avx2(std::size_t n, double a, const double* x, double* y) {
  __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d r =
        _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(y + i, r);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void matvec_acc_avx2(const double* a, std::size_t rows, std::size_t cols,
                     const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    y[r] += dot_avx2(cols, a + r * cols, x);
  }
}

void matvec_t_acc_avx2(const double* a, std::size_t rows, std::size_t cols,
                       const double* u, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    axpy_avx2(cols, u[r], a + r * cols, y);
  }
}

void ger_acc_avx2(double* a, std::size_t rows, std::size_t cols, double s,
                  const double* u, const double* v) {
  for (std::size_t r = 0; r < rows; ++r) {
    axpy_avx2(cols, s * u[r], v, a + r * cols);
  }
}

}  // namespace

namespace detail {

const KernelTable& avx2_table() {
  static const KernelTable t{dot_avx2, axpy_avx2, matvec_acc_avx2,
                             matvec_t_acc_avx2, ger_acc_avx2};
  return t;
}

}  // namespace detail

}  // namespace xpr::kernels

#endif  // x86
