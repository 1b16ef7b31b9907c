// AVX2 + FMA variants. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after the CPUID check in dispatch.cpp.

#include <immintrin.h>

#include "apn/kernels.hpp"

namespace apn::kernels::detail {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// C(MxN) += A * B where A(i, p) = a[i * rs + p * cs]. Covers both the NN and
// the TN layouts; register block is 4 rows x 8 columns.
void gemm_strided_a(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t rs,
                    std::size_t cs, const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const double* a0 = a + (i + 0) * rs;
    const double* a1 = a + (i + 1) * rs;
    const double* a2 = a + (i + 2) * rs;
    const double* a3 = a + (i + 3) * rs;
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
      __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
      __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
      __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b + p * ldb + j;
        const __m256d b0 = _mm256_loadu_pd(brow);
        const __m256d b1 = _mm256_loadu_pd(brow + 4);
        __m256d av = _mm256_broadcast_sd(a0 + p * cs);
        c00 = _mm256_fmadd_pd(av, b0, c00);
        c01 = _mm256_fmadd_pd(av, b1, c01);
        av = _mm256_broadcast_sd(a1 + p * cs);
        c10 = _mm256_fmadd_pd(av, b0, c10);
        c11 = _mm256_fmadd_pd(av, b1, c11);
        av = _mm256_broadcast_sd(a2 + p * cs);
        c20 = _mm256_fmadd_pd(av, b0, c20);
        c21 = _mm256_fmadd_pd(av, b1, c21);
        av = _mm256_broadcast_sd(a3 + p * cs);
        c30 = _mm256_fmadd_pd(av, b0, c30);
        c31 = _mm256_fmadd_pd(av, b1, c31);
      }
      double* r0 = c + (i + 0) * ldc + j;
      double* r1 = c + (i + 1) * ldc + j;
      double* r2 = c + (i + 2) * ldc + j;
      double* r3 = c + (i + 3) * ldc + j;
      _mm256_storeu_pd(r0, _mm256_add_pd(_mm256_loadu_pd(r0), c00));
      _mm256_storeu_pd(r0 + 4, _mm256_add_pd(_mm256_loadu_pd(r0 + 4), c01));
      _mm256_storeu_pd(r1, _mm256_add_pd(_mm256_loadu_pd(r1), c10));
      _mm256_storeu_pd(r1 + 4, _mm256_add_pd(_mm256_loadu_pd(r1 + 4), c11));
      _mm256_storeu_pd(r2, _mm256_add_pd(_mm256_loadu_pd(r2), c20));
      _mm256_storeu_pd(r2 + 4, _mm256_add_pd(_mm256_loadu_pd(r2 + 4), c21));
      _mm256_storeu_pd(r3, _mm256_add_pd(_mm256_loadu_pd(r3), c30));
      _mm256_storeu_pd(r3 + 4, _mm256_add_pd(_mm256_loadu_pd(r3 + 4), c31));
    }
    for (; j + 4 <= n; j += 4) {
      __m256d c0 = _mm256_setzero_pd(), c1 = _mm256_setzero_pd();
      __m256d c2 = _mm256_setzero_pd(), c3 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d bv = _mm256_loadu_pd(b + p * ldb + j);
        c0 = _mm256_fmadd_pd(_mm256_broadcast_sd(a0 + p * cs), bv, c0);
        c1 = _mm256_fmadd_pd(_mm256_broadcast_sd(a1 + p * cs), bv, c1);
        c2 = _mm256_fmadd_pd(_mm256_broadcast_sd(a2 + p * cs), bv, c2);
        c3 = _mm256_fmadd_pd(_mm256_broadcast_sd(a3 + p * cs), bv, c3);
      }
      double* r0 = c + (i + 0) * ldc + j;
      double* r1 = c + (i + 1) * ldc + j;
      double* r2 = c + (i + 2) * ldc + j;
      double* r3 = c + (i + 3) * ldc + j;
      _mm256_storeu_pd(r0, _mm256_add_pd(_mm256_loadu_pd(r0), c0));
      _mm256_storeu_pd(r1, _mm256_add_pd(_mm256_loadu_pd(r1), c1));
      _mm256_storeu_pd(r2, _mm256_add_pd(_mm256_loadu_pd(r2), c2));
      _mm256_storeu_pd(r3, _mm256_add_pd(_mm256_loadu_pd(r3), c3));
    }
    for (; j < n; ++j) {
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double bv = b[p * ldb + j];
        s0 += a0[p * cs] * bv;
        s1 += a1[p * cs] * bv;
        s2 += a2[p * cs] * bv;
        s3 += a3[p * cs] * bv;
      }
      c[(i + 0) * ldc + j] += s0;
      c[(i + 1) * ldc + j] += s1;
      c[(i + 2) * ldc + j] += s2;
      c[(i + 3) * ldc + j] += s3;
    }
  }
  for (; i < m; ++i) {
    const double* ai = a + i * rs;
    double* crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p * cs];
      const __m256d avv = _mm256_set1_pd(av);
      const double* brow = b + p * ldb;
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        _mm256_storeu_pd(crow + j, _mm256_fmadd_pd(avv, _mm256_loadu_pd(brow + j), _mm256_loadu_pd(crow + j)));
      }
      for (; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  gemm_strided_a(m, n, k, a, lda, 1, b, ldb, c, ldc);
}

void gemm_tn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  gemm_strided_a(m, n, k, a, 1, lda, b, ldb, c, ldc);
}

// Dot-product form: one A row against four B rows at a time.
void gemm_nt_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * lda;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + (j + 0) * ldb;
      const double* b1 = b + (j + 1) * ldb;
      const double* b2 = b + (j + 2) * ldb;
      const double* b3 = b + (j + 3) * ldb;
      __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
      __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
      std::size_t p = 0;
      for (; p + 4 <= k; p += 4) {
        const __m256d av = _mm256_loadu_pd(arow + p);
        s0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + p), s0);
        s1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + p), s1);
        s2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + p), s2);
        s3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + p), s3);
      }
      double t0 = hsum(s0), t1 = hsum(s1), t2 = hsum(s2), t3 = hsum(s3);
      for (; p < k; ++p) {
        t0 += arow[p] * b0[p];
        t1 += arow[p] * b1[p];
        t2 += arow[p] * b2[p];
        t3 += arow[p] * b3[p];
      }
      c[i * ldc + j + 0] += t0;
      c[i * ldc + j + 1] += t1;
      c[i * ldc + j + 2] += t2;
      c[i * ldc + j + 3] += t3;
    }
    for (; j < n; ++j) {
      const double* brow = b + j * ldb;
      __m256d s = _mm256_setzero_pd();
      std::size_t p = 0;
      for (; p + 4 <= k; p += 4) s = _mm256_fmadd_pd(_mm256_loadu_pd(arow + p), _mm256_loadu_pd(brow + p), s);
      double t = hsum(s);
      for (; p < k; ++p) t += arow[p] * brow[p];
      c[i * ldc + j] += t;
    }
  }
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4) s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
  double t = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) t += x[i] * y[i];
  return t;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

const KernelTable& avx2_table_unchecked() {
  static const KernelTable table{"avx2", gemm_nn_avx2, gemm_nt_avx2, gemm_tn_avx2, dot_avx2, axpy_avx2};
  return table;
}

}  // namespace apn::kernels::detail
