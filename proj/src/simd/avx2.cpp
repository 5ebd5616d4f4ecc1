#include <immintrin.h>

#include "rpf/simd.hpp"

namespace rpf::simd::avx2 {

namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

inline void store(double* c, __m256d v, bool accumulate) {
    if (accumulate) v = _mm256_add_pd(v, _mm256_loadu_pd(c));
    _mm256_storeu_pd(c, v);
}

// R rows of C, 8 then 4 columns per register block, scalar column tail.
template <int R>
void rows_nn(int n, int k, double const* a, int lda, double const* b, int ldb, double* c, int ldc, bool accumulate) {
    int j = 0;
    for (; j + 8 <= n; j += 8) {
        __m256d s0[R], s1[R];
        for (int r = 0; r < R; ++r) s0[r] = s1[r] = _mm256_setzero_pd();
        for (int p = 0; p < k; ++p) {
            double const* bp = b + static_cast<std::size_t>(p) * ldb + j;
            __m256d const b0 = _mm256_loadu_pd(bp);
            __m256d const b1 = _mm256_loadu_pd(bp + 4);
            for (int r = 0; r < R; ++r) {
                __m256d const av = _mm256_broadcast_sd(a + static_cast<std::size_t>(r) * lda + p);
                s0[r] = _mm256_fmadd_pd(av, b0, s0[r]);
                s1[r] = _mm256_fmadd_pd(av, b1, s1[r]);
            }
        }
        for (int r = 0; r < R; ++r) {
            double* cr = c + static_cast<std::size_t>(r) * ldc + j;
            store(cr, s0[r], accumulate);
            store(cr + 4, s1[r], accumulate);
        }
    }
    for (; j + 4 <= n; j += 4) {
        __m256d s[R];
        for (int r = 0; r < R; ++r) s[r] = _mm256_setzero_pd();
        for (int p = 0; p < k; ++p) {
            __m256d const bv = _mm256_loadu_pd(b + static_cast<std::size_t>(p) * ldb + j);
            for (int r = 0; r < R; ++r) {
                s[r] = _mm256_fmadd_pd(_mm256_broadcast_sd(a + static_cast<std::size_t>(r) * lda + p), bv, s[r]);
            }
        }
        for (int r = 0; r < R; ++r) store(c + static_cast<std::size_t>(r) * ldc + j, s[r], accumulate);
    }
    for (; j < n; ++j) {
        for (int r = 0; r < R; ++r) {
            double sum = 0.0;
            for (int p = 0; p < k; ++p) sum += a[static_cast<std::size_t>(r) * lda + p] * b[static_cast<std::size_t>(p) * ldb + j];
            double& out = c[static_cast<std::size_t>(r) * ldc + j];
            out = accumulate ? out + sum : sum;
        }
    }
}

void gemm_nn(int m, int n, int k, double const* a, int lda, double const* b, int ldb, double* c, int ldc,
             bool accumulate) {
    int i = 0;
    for (; i + 4 <= m; i += 4) {
        rows_nn<4>(n, k, a + static_cast<std::size_t>(i) * lda, lda, b, ldb, c + static_cast<std::size_t>(i) * ldc, ldc,
                   accumulate);
    }
    double const* ai = a + static_cast<std::size_t>(i) * lda;
    double* ci = c + static_cast<std::size_t>(i) * ldc;
    switch (m - i) {
        case 3: rows_nn<3>(n, k, ai, lda, b, ldb, ci, ldc, accumulate); break;
        case 2: rows_nn<2>(n, k, ai, lda, b, ldb, ci, ldc, accumulate); break;
        case 1: rows_nn<1>(n, k, ai, lda, b, ldb, ci, ldc, accumulate); break;
        default: break;
    }
}

// One row of A against four rows of B at a time.
void gemm_nt(int m, int n, int k, double const* a, int lda, double const* b, int ldb, double* c, int ldc,
             bool accumulate) {
    int const kv = k - k % 4;
    for (int i = 0; i < m; ++i) {
        double const* ai = a + static_cast<std::size_t>(i) * lda;
        double* ci = c + static_cast<std::size_t>(i) * ldc;
        int j = 0;
        for (; j + 4 <= n; j += 4) {
            double const* b0 = b + static_cast<std::size_t>(j) * ldb;
            double const* b1 = b0 + ldb;
            double const* b2 = b1 + ldb;
            double const* b3 = b2 + ldb;
            __m256d s0 = _mm256_setzero_pd(), s1 = s0, s2 = s0, s3 = s0;
            for (int p = 0; p < kv; p += 4) {
                __m256d const av = _mm256_loadu_pd(ai + p);
                s0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + p), s0);
                s1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + p), s1);
                s2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + p), s2);
                s3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + p), s3);
            }
            double sums[4] = {hsum(s0), hsum(s1), hsum(s2), hsum(s3)};
            for (int p = kv; p < k; ++p) {
                sums[0] += ai[p] * b0[p];
                sums[1] += ai[p] * b1[p];
                sums[2] += ai[p] * b2[p];
                sums[3] += ai[p] * b3[p];
            }
            for (int t = 0; t < 4; ++t) ci[j + t] = accumulate ? ci[j + t] + sums[t] : sums[t];
        }
        for (; j < n; ++j) {
            double const* bj = b + static_cast<std::size_t>(j) * ldb;
            __m256d s = _mm256_setzero_pd();
            for (int p = 0; p < kv; p += 4) s = _mm256_fmadd_pd(_mm256_loadu_pd(ai + p), _mm256_loadu_pd(bj + p), s);
            double sum = hsum(s);
            for (int p = kv; p < k; ++p) sum += ai[p] * bj[p];
            ci[j] = accumulate ? ci[j] + sum : sum;
        }
    }
}

double dot(std::size_t n, double const* x, double const* y) {
    __m256d s0 = _mm256_setzero_pd(), s1 = s0;
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
        s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
    }
    for (; i + 4 <= n; i += 4) s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    double sum = hsum(_mm256_add_pd(s0, s1));
    for (; i < n; ++i) sum += x[i] * y[i];
    return sum;
}

void axpy(std::size_t n, double alpha, double const* x, double* y) {
    __m256d const av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

Kernels const& kernels() {
    static Kernels const table{gemm_nn, gemm_nt, dot, axpy};
    return table;
}

}  // namespace rpf::simd::avx2
