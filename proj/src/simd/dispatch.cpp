#include <atomic>
#include <cstdlib>
#include <cstring>
#include <vector>

#include "rpf/errors.hpp"
#include "rpf/simd.hpp"

namespace rpf::simd {

namespace {

bool cpu_has_avx2() {
#if defined(RPF_HAVE_AVX2)
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend detect() {
    char const* env = std::getenv("RPF_SIMD");
    if (env && std::strcmp(env, "scalar") == 0) return Backend::scalar;
    return cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& current() {
    static std::atomic<Backend> backend{detect()};
    return backend;
}

Kernels const& table() {
#if defined(RPF_HAVE_AVX2)
    if (current().load(std::memory_order_relaxed) == Backend::avx2) return avx2::kernels();
#endif
    return scalar::kernels();
}

}  // namespace

Backend active_backend() { return current().load(); }

std::string to_string(Backend backend) { return backend == Backend::avx2 ? "avx2" : "scalar"; }

bool backend_available(Backend backend) { return backend == Backend::scalar || cpu_has_avx2(); }

void set_backend(Backend backend) {
    if (!backend_available(backend)) throw ValidationError("SIMD backend " + to_string(backend) + " is unavailable");
    current().store(backend);
}

void gemm_nn(int m, int n, int k, double const* a, int lda, double const* b, int ldb, double* c, int ldc,
             bool accumulate) {
    table().gemm_nn(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

void gemm_nt(int m, int n, int k, double const* a, int lda, double const* b, int ldb, double* c, int ldc,
             bool accumulate) {
    table().gemm_nt(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

void gemm_tn(int m, int n, int k, double const* a, int lda, double const* b, int ldb, double* c, int ldc,
             bool accumulate) {
    std::vector<double> at(static_cast<std::size_t>(m) * k);
    for (int p = 0; p < k; ++p) {
        for (int i = 0; i < m; ++i) at[static_cast<std::size_t>(i) * k + p] = a[static_cast<std::size_t>(p) * lda + i];
    }
    table().gemm_nn(m, n, k, at.data(), k, b, ldb, c, ldc, accumulate);
}

double dot(std::size_t n, double const* x, double const* y) { return table().dot(n, x, y); }

void axpy(std::size_t n, double alpha, double const* x, double* y) { table().axpy(n, alpha, x, y); }

}  // namespace rpf::simd
