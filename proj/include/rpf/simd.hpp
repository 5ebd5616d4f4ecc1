#pragma once

#include <cstddef>
#include <string>

// Dense double-precision kernels behind the neural solver. Matrices are
// row-major with explicit leading dimensions. Each entry point dispatches to
// the scalar reference or an AVX2/FMA variant picked once at startup; the
// environment variable RPF_SIMD=scalar forces the reference path.

namespace rpf::simd {

enum class Backend { scalar, avx2 };

Backend active_backend();
std::string to_string(Backend backend);
bool backend_available(Backend backend);
/// Overrides the runtime choice; throws ValidationError if unavailable.
void set_backend(Backend backend);

/// C = A B (+ C when accumulate), A is m x k, B is k x n.
void gemm_nn(int m, int n, int k, double const* a, int lda, double const* b, int ldb, double* c, int ldc,
             bool accumulate = false);
/// C = A B^T (+ C), A is m x k, B is n x k.
void gemm_nt(int m, int n, int k, double const* a, int lda, double const* b, int ldb, double* c, int ldc,
             bool accumulate = false);
/// C = A^T B (+ C), A is k x m, B is k x n.
void gemm_tn(int m, int n, int k, double const* a, int lda, double const* b, int ldb, double* c, int ldc,
             bool accumulate = false);

double dot(std::size_t n, double const* x, double const* y);
/// y += alpha x
void axpy(std::size_t n, double alpha, double const* x, double* y);

struct Kernels {
    void (*gemm_nn)(int, int, int, double const*, int, double const*, int, double*, int, bool);
    void (*gemm_nt)(int, int, int, double const*, int, double const*, int, double*, int, bool);
    double (*dot)(std::size_t, double const*, double const*);
    void (*axpy)(std::size_t, double, double const*, double*);
};

namespace scalar {
Kernels const& kernels();
}

#if defined(RPF_HAVE_AVX2)
namespace avx2 {
Kernels const& kernels();
}
#endif

}  // namespace rpf::simd
