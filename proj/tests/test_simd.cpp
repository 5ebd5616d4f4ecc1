#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "rpf/neural_solver.hpp"
#include "rpf/simd.hpp"

namespace rpf::simd {
namespace {

std::vector<double> random_matrix(std::mt19937_64& rng, int rows, int cols) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> out(static_cast<std::size_t>(rows) * cols);
    for (auto& x : out) x = dist(rng);
    return out;
}

// Naive triple loop with the operand layout spelled out per case.
std::vector<double> reference(char kind, int m, int n, int k, std::vector<double> const& a,
                              std::vector<double> const& b) {
    std::vector<double> c(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            for (int p = 0; p < k; ++p) {
                double av = kind == 't' ? a[p * m + i] : a[i * k + p];
                double bv = kind == 'n' || kind == 't' ? b[p * n + j] : b[j * k + p];
                c[i * n + j] += av * bv;
            }
    return c;
}

class BackendGuard {
  public:
    explicit BackendGuard(Backend b) : saved_(active_backend()) { set_backend(b); }
    ~BackendGuard() { set_backend(saved_); }

  private:
    Backend saved_;
};

void expect_close(std::vector<double> const& x, std::vector<double> const& y, double tol) {
    ASSERT_EQ(x.size(), y.size());
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x[i], y[i], tol) << "entry " << i;
}

std::vector<Backend> backends() {
    std::vector<Backend> out{Backend::scalar};
    if (backend_available(Backend::avx2)) out.push_back(Backend::avx2);
    return out;
}

TEST(SimdGemm, AllBackendsMatchReferenceOverShapes) {
    std::mt19937_64 rng(17);
    std::vector<int> sizes{0, 1, 2, 3, 4, 5, 7, 8, 9, 12, 13, 17, 100};
    for (auto backend : backends()) {
        BackendGuard guard(backend);
        for (int trial = 0; trial < 150; ++trial) {
            int m = sizes[rng() % sizes.size()], n = sizes[rng() % sizes.size()], k = sizes[rng() % sizes.size()];
            auto a = random_matrix(rng, m, k), b = random_matrix(rng, k, n), bt = random_matrix(rng, n, k);
            double tol = 1e-13 * std::max(1, k);

            std::vector<double> c(static_cast<std::size_t>(m) * n, 5.0);
            gemm_nn(m, n, k, a.data(), k, b.data(), n, c.data(), n);
            expect_close(c, reference('n', m, n, k, a, b), tol);

            gemm_nt(m, n, k, a.data(), k, bt.data(), k, c.data(), n);
            expect_close(c, reference('x', m, n, k, a, bt), tol);

            auto at = random_matrix(rng, k, m);
            gemm_tn(m, n, k, at.data(), m, b.data(), n, c.data(), n);
            expect_close(c, reference('t', m, n, k, at, b), tol);

            auto before = c;
            gemm_nn(m, n, k, a.data(), k, b.data(), n, c.data(), n, true);
            auto expected = reference('n', m, n, k, a, b);
            for (std::size_t i = 0; i < expected.size(); ++i) expected[i] += before[i];
            expect_close(c, expected, tol);
        }
    }
}

TEST(SimdGemm, LeadingDimensionsAreRespected) {
    std::mt19937_64 rng(18);
    for (auto backend : backends()) {
        BackendGuard guard(backend);
        int m = 6, n = 9, k = 11, lda = 14, ldb = 12, ldc = 10;
        auto a = random_matrix(rng, m, lda), b = random_matrix(rng, k, ldb);
        std::vector<double> c(static_cast<std::size_t>(m) * ldc, -7.0);
        gemm_nn(m, n, k, a.data(), lda, b.data(), ldb, c.data(), ldc);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
                double sum = 0.0;
                for (int p = 0; p < k; ++p) sum += a[i * lda + p] * b[p * ldb + j];
                EXPECT_NEAR(c[i * ldc + j], sum, 1e-13);
            }
            EXPECT_EQ(c[i * ldc + n], -7.0);
        }
    }
}

TEST(SimdEquivalence, Avx2MatchesScalarReference) {
    if (!backend_available(Backend::avx2)) GTEST_SKIP() << "AVX2 unavailable on this CPU";
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 100; ++trial) {
        int m = 1 + rng() % 40, n = 1 + rng() % 120, k = 1 + rng() % 120;
        auto a = random_matrix(rng, m, k), b = random_matrix(rng, k, n), bt = random_matrix(rng, n, k);
        std::vector<double> c_scalar(m * n), c_simd(m * n), d_scalar(m * n), d_simd(m * n);
        std::size_t len = a.size();
        double dot_scalar, dot_simd;
        std::vector<double> y_scalar(a.size(), 0.5), y_simd(a.size(), 0.5);
        {
            BackendGuard guard(Backend::scalar);
            gemm_nn(m, n, k, a.data(), k, b.data(), n, c_scalar.data(), n);
            gemm_nt(m, n, k, a.data(), k, bt.data(), k, d_scalar.data(), n);
            dot_scalar = dot(len, a.data(), a.data());
            axpy(len, -0.3, a.data(), y_scalar.data());
        }
        {
            BackendGuard guard(Backend::avx2);
            gemm_nn(m, n, k, a.data(), k, b.data(), n, c_simd.data(), n);
            gemm_nt(m, n, k, a.data(), k, bt.data(), k, d_simd.data(), n);
            dot_simd = dot(len, a.data(), a.data());
            axpy(len, -0.3, a.data(), y_simd.data());
        }
        expect_close(c_scalar, c_simd, 1e-13 * k);
        expect_close(d_scalar, d_simd, 1e-13 * k);
        EXPECT_NEAR(dot_scalar, dot_simd, 1e-13 * dot_scalar);
        expect_close(y_scalar, y_simd, 1e-15);
    }
}

TEST(SimdEquivalence, MlpLossAndGradientAgreeAcrossBackends) {
    if (!backend_available(Backend::avx2)) GTEST_SKIP() << "AVX2 unavailable on this CPU";
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    int const n = 37, d = 12, o = 18;
    TrainingData data{n, d, o, std::vector<double>(n * d), std::vector<double>(n * o)};
    for (auto& x : data.inputs) x = dist(rng);
    for (auto& y : data.targets) y = dist(rng);
    NeuralSolver s(FeatureKind::mlp, d, o, {100, 100}, 5);
    for (auto& p : s.parameters()) p = 0.2 * dist(rng);
    s.normalizer() = Normalizer::fit(data);

    std::vector<double> g_scalar, g_simd;
    double l_scalar, l_simd;
    {
        BackendGuard guard(Backend::scalar);
        l_scalar = s.loss(data, &g_scalar);
    }
    {
        BackendGuard guard(Backend::avx2);
        l_simd = s.loss(data, &g_simd);
    }
    EXPECT_NEAR(l_scalar, l_simd, 1e-12 * l_scalar);
    double scale = 0.0;
    for (double g : g_scalar) scale = std::max(scale, std::abs(g));
    expect_close(g_scalar, g_simd, 1e-11 * scale);
}

TEST(SimdDispatch, BackendSwitching) {
    auto saved = active_backend();
    set_backend(Backend::scalar);
    EXPECT_EQ(active_backend(), Backend::scalar);
    EXPECT_EQ(to_string(Backend::scalar), "scalar");
    if (!backend_available(Backend::avx2)) {
        EXPECT_ANY_THROW(set_backend(Backend::avx2));
    }
    set_backend(saved);
    double x[3] = {1, 2, 3};
    EXPECT_EQ(dot(3, x, x), 14.0);
}

}  // namespace
}  // namespace rpf::simd
