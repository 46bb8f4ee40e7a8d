#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

// CPU kernels behind all tensor math. Every hot arithmetic loop exists as a
// scalar reference implementation and (on x86) an AVX2+FMA variant; the
// active set is chosen once at startup from cpuid, overridable via the
// UMM_ISA environment variable or set_isa(). Variants are equivalence-tested
// against the scalar reference in tests/test_kernels.cpp.
//
// Matrix kernels are row-major and fully contiguous. Accumulation order per
// output element is fixed, so results are deterministic for a given isa.

namespace umm::kern {

enum class Isa { scalar, avx2 };

Isa active_isa();
void set_isa(Isa isa);
Isa best_supported_isa();
const char* isa_name(Isa isa);

template <typename T>
struct Kernels {
    // C[M,N] = alpha*A[M,K]*B[K,N] + beta*C
    void (*gemm_nn)(int64_t M, int64_t N, int64_t K, T alpha, const T* A, const T* B, T beta, T* C);
    // C[M,N] = alpha*A[M,K]*B[N,K]^T + beta*C
    void (*gemm_nt)(int64_t M, int64_t N, int64_t K, T alpha, const T* A, const T* B, T beta, T* C);
    // C[M,N] = alpha*A[K,M]^T*B[K,N] + beta*C
    void (*gemm_tn)(int64_t M, int64_t N, int64_t K, T alpha, const T* A, const T* B, T beta, T* C);

    void (*add)(T* y, const T* x, int64_t n);          // y += x
    void (*axpy)(T* y, T a, const T* x, int64_t n);    // y += a*x
    void (*scale)(T* y, T a, int64_t n);               // y *= a
    void (*mul)(T* y, const T* x, int64_t n);          // y *= x
    void (*fma_acc)(T* y, const T* a, const T* b, int64_t n); // y += a*b

    void (*gelu_fwd)(T* y, const T* x, int64_t n);
    void (*gelu_bwd)(T* dx, const T* x, const T* dy, int64_t n); // dx += gelu'(x)*dy
    void (*silu_fwd)(T* y, const T* x, int64_t n);
    void (*silu_bwd)(T* dx, const T* x, const T* dy, int64_t n);

    // x is already masked/shifted as needed; rows are independent
    void (*softmax_rows)(T* p, const T* x, int64_t rows, int64_t cols);
    void (*softmax_rows_bwd)(T* dx, const T* p, const T* dp, int64_t rows, int64_t cols);

    void (*layernorm_fwd)(T* y, T* mean, T* rstd, const T* x, const T* gamma, const T* beta,
                          int64_t rows, int64_t cols, T eps);
    void (*layernorm_bwd)(T* dx, T* dgamma, T* dbeta, const T* dy, const T* x, const T* mean,
                          const T* rstd, const T* gamma, int64_t rows, int64_t cols);

    T (*reduce_sum)(const T* x, int64_t n);
    T (*reduce_sumsq)(const T* x, int64_t n);

    void (*adamw)(T* p, const T* g, T* m, T* v, int64_t n, T lr, T beta1, T beta2, T eps,
                  T weight_decay, int64_t step);
};

template <typename T>
const Kernels<T>& active();

template <typename T>
const Kernels<T>& table(Isa isa);

namespace scalar {
template <typename T>
void gemm_nn(int64_t M, int64_t N, int64_t K, T alpha, const T* A, const T* B, T beta, T* C);
template <typename T>
void gemm_nt(int64_t M, int64_t N, int64_t K, T alpha, const T* A, const T* B, T beta, T* C);
template <typename T>
void gemm_tn(int64_t M, int64_t N, int64_t K, T alpha, const T* A, const T* B, T beta, T* C);
} // namespace scalar

} // namespace umm::kern
