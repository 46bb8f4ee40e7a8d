// Equivalence tests: every dispatched kernel variant against the scalar
// reference, over sizes that exercise vector bodies and remainders.

#include "doctest.h"

#include "umm/kernels.hpp"
#include "umm/rng.hpp"
#include "umm/tensor.hpp"

#include <cmath>
#include <vector>

using namespace umm;

namespace {

bool have_avx2() { return kern::best_supported_isa() == kern::Isa::avx2; }

template <typename T>
std::vector<T> randvec(Rng& rng, int64_t n, T scl = T(1)) {
    std::vector<T> v(static_cast<size_t>(n));
    for (auto& x : v) x = T(rng.next_normal()) * scl;
    return v;
}

template <typename T>
T rel_err(const std::vector<T>& a, const std::vector<T>& b) {
    double num = 0, den = 1e-30;
    for (size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, double(std::abs(a[i] - b[i])));
        den = std::max(den, double(std::abs(b[i])));
    }
    return T(num / den);
}

} // namespace

TEST_CASE("gemm scalar reference matches naive triple loop") {
    Rng rng(1);
    int64_t M = 7, N = 13, K = 9;
    auto A = randvec<float>(rng, M * K);
    auto B = randvec<float>(rng, K * N);
    std::vector<float> C(size_t(M * N), 0.5f), Cref = C;
    for (int64_t i = 0; i < M; ++i)
        for (int64_t j = 0; j < N; ++j) {
            float acc = 0;
            for (int64_t k = 0; k < K; ++k) acc += A[size_t(i * K + k)] * B[size_t(k * N + j)];
            Cref[size_t(i * N + j)] = 2.0f * acc + 3.0f * Cref[size_t(i * N + j)];
        }
    kern::scalar::gemm_nn<float>(M, N, K, 2.0f, A.data(), B.data(), 3.0f, C.data());
    CHECK(rel_err(C, Cref) < 1e-6f);
}

TEST_CASE("gemm nn/nt/tn are consistent transposes of each other") {
    Rng rng(2);
    int64_t M = 11, N = 17, K = 23;
    auto A = randvec<float>(rng, M * K);
    auto B = randvec<float>(rng, K * N);
    std::vector<float> C_nn(static_cast<size_t>(M * N)), C_nt(static_cast<size_t>(M * N)), C_tn(static_cast<size_t>(M * N));
    kern::scalar::gemm_nn<float>(M, N, K, 1.0f, A.data(), B.data(), 0.0f, C_nn.data());

    std::vector<float> Bt(static_cast<size_t>(N * K)), At(static_cast<size_t>(K * M));
    for (int64_t k = 0; k < K; ++k)
        for (int64_t j = 0; j < N; ++j) Bt[size_t(j * K + k)] = B[size_t(k * N + j)];
    for (int64_t i = 0; i < M; ++i)
        for (int64_t k = 0; k < K; ++k) At[size_t(k * M + i)] = A[size_t(i * K + k)];
    kern::scalar::gemm_nt<float>(M, N, K, 1.0f, A.data(), Bt.data(), 0.0f, C_nt.data());
    kern::scalar::gemm_tn<float>(M, N, K, 1.0f, At.data(), B.data(), 0.0f, C_tn.data());
    CHECK(rel_err(C_nt, C_nn) < 1e-5f);
    CHECK(rel_err(C_tn, C_nn) < 1e-5f);
}

template <typename T>
static void gemm_equivalence_for_type(T tol) {
    if (!have_avx2()) return;
    Rng rng(3);
    const auto& sc = kern::table<T>(kern::Isa::scalar);
    const auto& vx = kern::table<T>(kern::Isa::avx2);
    // sizes chosen to hit full tiles, row remainders and column remainders
    int64_t sizes[][3] = {{1, 1, 1}, {4, 16, 8}, {5, 17, 9}, {64, 96, 96}, {33, 50, 31}, {128, 40, 24}};
    for (auto& s : sizes) {
        int64_t M = s[0], N = s[1], K = s[2];
        auto A = randvec<T>(rng, M * K);
        auto B = randvec<T>(rng, K * N);
        auto Bt = randvec<T>(rng, N * K);
        auto At = randvec<T>(rng, K * M);
        for (T beta : {T(0), T(1), T(0.5)}) {
            std::vector<T> c0(size_t(M * N), T(0.25)), c1 = c0;
            sc.gemm_nn(M, N, K, T(1.5), A.data(), B.data(), beta, c0.data());
            vx.gemm_nn(M, N, K, T(1.5), A.data(), B.data(), beta, c1.data());
            CHECK(rel_err(c1, c0) < tol);

            std::vector<T> d0(size_t(M * N), T(0.25)), d1 = d0;
            sc.gemm_nt(M, N, K, T(1), A.data(), Bt.data(), beta, d0.data());
            vx.gemm_nt(M, N, K, T(1), A.data(), Bt.data(), beta, d1.data());
            CHECK(rel_err(d1, d0) < tol);

            std::vector<T> e0(size_t(M * N), T(0.25)), e1 = e0;
            sc.gemm_tn(M, N, K, T(1), At.data(), B.data(), beta, e0.data());
            vx.gemm_tn(M, N, K, T(1), At.data(), B.data(), beta, e1.data());
            CHECK(rel_err(e1, e0) < tol);
        }
    }
}

TEST_CASE("avx2 gemm matches scalar, f32 and f64") {
    gemm_equivalence_for_type<float>(2e-5f);
    gemm_equivalence_for_type<double>(1e-12);
}

TEST_CASE("avx2 elementwise kernels match scalar") {
    if (!have_avx2()) return;
    Rng rng(4);
    const auto& sc = kern::table<float>(kern::Isa::scalar);
    const auto& vx = kern::table<float>(kern::Isa::avx2);
    for (int64_t n : {1, 7, 8, 63, 256, 1001}) {
        auto x = randvec<float>(rng, n);
        auto y0 = randvec<float>(rng, n);
        auto y1 = y0;

        sc.add(y0.data(), x.data(), n);
        vx.add(y1.data(), x.data(), n);
        CHECK(rel_err(y1, y0) < 1e-6f);

        sc.axpy(y0.data(), 0.37f, x.data(), n);
        vx.axpy(y1.data(), 0.37f, x.data(), n);
        CHECK(rel_err(y1, y0) < 1e-6f);

        sc.scale(y0.data(), 1.1f, n);
        vx.scale(y1.data(), 1.1f, n);
        CHECK(rel_err(y1, y0) < 1e-6f);

        sc.mul(y0.data(), x.data(), n);
        vx.mul(y1.data(), x.data(), n);
        CHECK(rel_err(y1, y0) < 1e-6f);

        auto a = randvec<float>(rng, n);
        sc.fma_acc(y0.data(), a.data(), x.data(), n);
        vx.fma_acc(y1.data(), a.data(), x.data(), n);
        CHECK(rel_err(y1, y0) < 1e-6f);

        std::vector<float> s0(static_cast<size_t>(n)), s1(static_cast<size_t>(n));
        sc.silu_fwd(s0.data(), x.data(), n);
        vx.silu_fwd(s1.data(), x.data(), n);
        CHECK(rel_err(s1, s0) < 2e-6f);

        std::vector<float> d0(size_t(n), 0.1f), d1(size_t(n), 0.1f);
        sc.silu_bwd(d0.data(), x.data(), a.data(), n);
        vx.silu_bwd(d1.data(), x.data(), a.data(), n);
        CHECK(rel_err(d1, d0) < 2e-5f);

        CHECK(std::abs(sc.reduce_sum(x.data(), n) - vx.reduce_sum(x.data(), n)) < 1e-4f);
        CHECK(std::abs(sc.reduce_sumsq(x.data(), n) - vx.reduce_sumsq(x.data(), n)) < 1e-4f);
    }
}

TEST_CASE("avx2 softmax and layernorm match scalar") {
    if (!have_avx2()) return;
    Rng rng(5);
    const auto& sc = kern::table<float>(kern::Isa::scalar);
    const auto& vx = kern::table<float>(kern::Isa::avx2);
    for (int64_t cols : {3, 8, 21, 96, 150}) {
        int64_t rows = 17;
        auto x = randvec<float>(rng, rows * cols, 3.0f);
        std::vector<float> p0(static_cast<size_t>(rows * cols)), p1(static_cast<size_t>(rows * cols));
        sc.softmax_rows(p0.data(), x.data(), rows, cols);
        vx.softmax_rows(p1.data(), x.data(), rows, cols);
        CHECK(rel_err(p1, p0) < 5e-6f);

        auto dp = randvec<float>(rng, rows * cols);
        std::vector<float> dx0(size_t(rows * cols), 0.f), dx1 = dx0;
        sc.softmax_rows_bwd(dx0.data(), p0.data(), dp.data(), rows, cols);
        vx.softmax_rows_bwd(dx1.data(), p0.data(), dp.data(), rows, cols);
        CHECK(rel_err(dx1, dx0) < 1e-5f);

        auto gamma = randvec<float>(rng, cols);
        auto beta = randvec<float>(rng, cols);
        std::vector<float> y0(static_cast<size_t>(rows * cols)), y1(static_cast<size_t>(rows * cols));
        std::vector<float> m0(static_cast<size_t>(rows)), m1(static_cast<size_t>(rows)), r0(static_cast<size_t>(rows)), r1(static_cast<size_t>(rows));
        sc.layernorm_fwd(y0.data(), m0.data(), r0.data(), x.data(), gamma.data(), beta.data(), rows,
                         cols, 1e-5f);
        vx.layernorm_fwd(y1.data(), m1.data(), r1.data(), x.data(), gamma.data(), beta.data(), rows,
                         cols, 1e-5f);
        CHECK(rel_err(y1, y0) < 2e-5f);

        auto dy = randvec<float>(rng, rows * cols);
        std::vector<float> lx0(size_t(rows * cols), 0.f), lx1 = lx0;
        std::vector<float> lg0(size_t(cols), 0.f), lg1 = lg0, lb0(size_t(cols), 0.f), lb1 = lb0;
        sc.layernorm_bwd(lx0.data(), lg0.data(), lb0.data(), dy.data(), x.data(), m0.data(),
                         r0.data(), gamma.data(), rows, cols);
        vx.layernorm_bwd(lx1.data(), lg1.data(), lb1.data(), dy.data(), x.data(), m1.data(),
                         r1.data(), gamma.data(), rows, cols);
        CHECK(rel_err(lx1, lx0) < 5e-5f);
        CHECK(rel_err(lg1, lg0) < 5e-5f);
        CHECK(rel_err(lb1, lb0) < 5e-5f);
    }
}

TEST_CASE("avx2 adamw matches scalar") {
    if (!have_avx2()) return;
    Rng rng(6);
    const auto& sc = kern::table<float>(kern::Isa::scalar);
    const auto& vx = kern::table<float>(kern::Isa::avx2);
    int64_t n = 1003;
    auto g = randvec<float>(rng, n);
    auto p0 = randvec<float>(rng, n), p1 = p0;
    auto m0 = randvec<float>(rng, n, 0.01f), m1 = m0;
    auto v0 = randvec<float>(rng, n, 0.f), v1 = v0;
    for (auto& x : v0) x = std::abs(x) + 0.001f;
    v1 = v0;
    sc.adamw(p0.data(), g.data(), m0.data(), v0.data(), n, 1e-3f, 0.9f, 0.999f, 1e-8f, 0.01f, 7);
    vx.adamw(p1.data(), g.data(), m1.data(), v1.data(), n, 1e-3f, 0.9f, 0.999f, 1e-8f, 0.01f, 7);
    CHECK(rel_err(p1, p0) < 1e-5f);
    CHECK(rel_err(m1, m0) < 1e-5f);
    CHECK(rel_err(v1, v0) < 1e-5f);
}

TEST_CASE("isa dispatch: env/default selection is a supported isa") {
    auto isa = kern::active_isa();
    CHECK((isa == kern::Isa::scalar || isa == kern::Isa::avx2));
    if (isa == kern::Isa::avx2) CHECK(have_avx2());
    CHECK(kern::isa_name(kern::Isa::scalar) == std::string("scalar"));
}
