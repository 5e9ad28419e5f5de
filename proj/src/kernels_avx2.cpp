// AVX2+FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma on x86-64 only; callers go through the runtime dispatch in
// kernels.cpp, so these symbols are never reached on CPUs without AVX2.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cstddef>

#include "sleicl/kernels.hpp"

namespace sleicl::kernels::avx2 {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

}  // namespace

double dot(const double* a, const double* b, size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double squared_l2(const double* a, const double* b, size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    const __m256d d1 =
        _mm256_sub_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4));
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
    acc1 = _mm256_fmadd_pd(d1, d1, acc1);
  }
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc0 = _mm256_fmadd_pd(d, d, acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

void axpy(double alpha, const double* x, double* y, size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i,
                     _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

namespace {

// One panel of 4 A-rows against the full B; C rows stay in registers/L1.
inline void matmul_panel4(const double* a, const double* b, double* c, size_t k,
                          size_t n, size_t lda) {
  double* c0 = c;
  double* c1 = c + n;
  double* c2 = c + 2 * n;
  double* c3 = c + 3 * n;
  for (size_t j = 0; j < n; ++j) c0[j] = c1[j] = c2[j] = c3[j] = 0.0;
  for (size_t kk = 0; kk < k; ++kk) {
    const __m256d a0 = _mm256_set1_pd(a[kk]);
    const __m256d a1 = _mm256_set1_pd(a[lda + kk]);
    const __m256d a2 = _mm256_set1_pd(a[2 * lda + kk]);
    const __m256d a3 = _mm256_set1_pd(a[3 * lda + kk]);
    const double* brow = b + kk * n;
    size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const __m256d bv = _mm256_loadu_pd(brow + j);
      _mm256_storeu_pd(c0 + j, _mm256_fmadd_pd(a0, bv, _mm256_loadu_pd(c0 + j)));
      _mm256_storeu_pd(c1 + j, _mm256_fmadd_pd(a1, bv, _mm256_loadu_pd(c1 + j)));
      _mm256_storeu_pd(c2 + j, _mm256_fmadd_pd(a2, bv, _mm256_loadu_pd(c2 + j)));
      _mm256_storeu_pd(c3 + j, _mm256_fmadd_pd(a3, bv, _mm256_loadu_pd(c3 + j)));
    }
    for (; j < n; ++j) {
      const double bv = brow[j];
      c0[j] += a[kk] * bv;
      c1[j] += a[lda + kk] * bv;
      c2[j] += a[2 * lda + kk] * bv;
      c3[j] += a[3 * lda + kk] * bv;
    }
  }
}

inline void matmul_row(const double* a, const double* b, double* c, size_t k,
                       size_t n) {
  for (size_t j = 0; j < n; ++j) c[j] = 0.0;
  for (size_t kk = 0; kk < k; ++kk) {
    const __m256d av = _mm256_set1_pd(a[kk]);
    const double* brow = b + kk * n;
    size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      _mm256_storeu_pd(c + j,
                       _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j), _mm256_loadu_pd(c + j)));
    }
    for (; j < n; ++j) c[j] += a[kk] * brow[j];
  }
}

}  // namespace

void matmul_nn(const double* a, const double* b, double* c, size_t m, size_t k,
               size_t n) {
  size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    matmul_panel4(a + i * k, b, c + i * n, k, n, k);
  }
  for (; i < m; ++i) {
    matmul_row(a + i * k, b, c + i * n, k, n);
  }
}

}  // namespace sleicl::kernels::avx2

#endif  // x86-64
