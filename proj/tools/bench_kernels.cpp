// Quick kernel throughput check: gemm GFLOP/s per isa at model-relevant sizes.

#include "umm/kernels.hpp"
#include "umm/rng.hpp"

#include <chrono>
#include <cstdio>
#include <vector>

using namespace umm;

static double bench_gemm(kern::Isa isa, int64_t M, int64_t N, int64_t K, int iters) {
    Rng rng(0);
    std::vector<float> A(size_t(M * K)), B(size_t(K * N)), C(size_t(M * N));
    for (auto& x : A) x = float(rng.next_normal());
    for (auto& x : B) x = float(rng.next_normal());
    const auto& kk = kern::table<float>(isa);
    kk.gemm_nn(M, N, K, 1.0f, A.data(), B.data(), 0.0f, C.data()); // warm
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < iters; ++i) kk.gemm_nn(M, N, K, 1.0f, A.data(), B.data(), 0.0f, C.data());
    auto t1 = std::chrono::steady_clock::now();
    double sec = std::chrono::duration<double>(t1 - t0).count();
    return 2.0 * double(M) * double(N) * double(K) * iters / sec / 1e9;
}

int main() {
    struct Case {
        int64_t M, N, K;
        int iters;
    } cases[] = {{640, 96, 96, 400}, {640, 384, 96, 100}, {640, 96, 384, 100}, {4096, 108, 24, 100},
                 {512, 512, 512, 20}};
    for (auto c : cases) {
        double gs = bench_gemm(kern::Isa::scalar, c.M, c.N, c.K, c.iters / 4 + 1);
        double gv = kern::best_supported_isa() == kern::Isa::avx2
                        ? bench_gemm(kern::Isa::avx2, c.M, c.N, c.K, c.iters)
                        : 0.0;
        std::printf("gemm %5lld x %4lld x %4lld   scalar %6.2f GF/s   avx2 %6.2f GF/s\n",
                    (long long)c.M, (long long)c.N, (long long)c.K, gs, gv);
    }
    return 0;
}
