#include "rpf/simd.hpp"

namespace rpf::simd::scalar {

namespace {

void gemm_nn(int m, int n, int k, double const* a, int lda, double const* b, int ldb, double* c, int ldc,
             bool accumulate) {
    for (int i = 0; i < m; ++i) {
        double* ci = c + static_cast<std::size_t>(i) * ldc;
        if (!accumulate) {
            for (int j = 0; j < n; ++j) ci[j] = 0.0;
        }
        for (int p = 0; p < k; ++p) {
            double const aip = a[static_cast<std::size_t>(i) * lda + p];
            double const* bp = b + static_cast<std::size_t>(p) * ldb;
            for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

void gemm_nt(int m, int n, int k, double const* a, int lda, double const* b, int ldb, double* c, int ldc,
             bool accumulate) {
    for (int i = 0; i < m; ++i) {
        double const* ai = a + static_cast<std::size_t>(i) * lda;
        for (int j = 0; j < n; ++j) {
            double const* bj = b + static_cast<std::size_t>(j) * ldb;
            double sum = 0.0;
            for (int p = 0; p < k; ++p) sum += ai[p] * bj[p];
            double& out = c[static_cast<std::size_t>(i) * ldc + j];
            out = accumulate ? out + sum : sum;
        }
    }
}

double dot(std::size_t n, double const* x, double const* y) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += x[i] * y[i];
    return sum;
}

void axpy(std::size_t n, double alpha, double const* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

Kernels const& kernels() {
    static Kernels const table{gemm_nn, gemm_nt, dot, axpy};
    return table;
}

}  // namespace rpf::simd::scalar
