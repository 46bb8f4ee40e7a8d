#include "umm/kernels.hpp"

#include <cmath>

// Scalar reference kernels. These define the semantics the simd variants are
// tested against; keep them simple and obviously correct.

namespace umm::kern::scalar {

template <typename T>
void gemm_nn(int64_t M, int64_t N, int64_t K, T alpha, const T* A, const T* B, T beta, T* C) {
    for (int64_t i = 0; i < M; ++i) {
        T* c = C + i * N;
        if (beta == T(0)) {
            for (int64_t j = 0; j < N; ++j) c[j] = T(0);
        } else if (beta != T(1)) {
            for (int64_t j = 0; j < N; ++j) c[j] *= beta;
        }
        for (int64_t k = 0; k < K; ++k) {
            T a = alpha * A[i * K + k];
            const T* b = B + k * N;
            for (int64_t j = 0; j < N; ++j) c[j] += a * b[j];
        }
    }
}

template <typename T>
void gemm_nt(int64_t M, int64_t N, int64_t K, T alpha, const T* A, const T* B, T beta, T* C) {
    for (int64_t i = 0; i < M; ++i) {
        const T* a = A + i * K;
        T* c = C + i * N;
        for (int64_t j = 0; j < N; ++j) {
            const T* b = B + j * K;
            T acc = 0;
            for (int64_t k = 0; k < K; ++k) acc += a[k] * b[k];
            c[j] = alpha * acc + (beta == T(0) ? T(0) : beta * c[j]);
        }
    }
}

template <typename T>
void gemm_tn(int64_t M, int64_t N, int64_t K, T alpha, const T* A, const T* B, T beta, T* C) {
    for (int64_t i = 0; i < M; ++i) {
        T* c = C + i * N;
        if (beta == T(0)) {
            for (int64_t j = 0; j < N; ++j) c[j] = T(0);
        } else if (beta != T(1)) {
            for (int64_t j = 0; j < N; ++j) c[j] *= beta;
        }
        for (int64_t k = 0; k < K; ++k) {
            T a = alpha * A[k * M + i];
            const T* b = B + k * N;
            for (int64_t j = 0; j < N; ++j) c[j] += a * b[j];
        }
    }
}

template void gemm_nn<float>(int64_t, int64_t, int64_t, float, const float*, const float*, float, float*);
template void gemm_nt<float>(int64_t, int64_t, int64_t, float, const float*, const float*, float, float*);
template void gemm_tn<float>(int64_t, int64_t, int64_t, float, const float*, const float*, float, float*);
template void gemm_nn<double>(int64_t, int64_t, int64_t, double, const double*, const double*, double, double*);
template void gemm_nt<double>(int64_t, int64_t, int64_t, double, const double*, const double*, double, double*);
template void gemm_tn<double>(int64_t, int64_t, int64_t, double, const double*, const double*, double, double*);

template <typename T>
static void add(T* y, const T* x, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] += x[i];
}

template <typename T>
static void axpy(T* y, T a, const T* x, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
static void scale(T* y, T a, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] *= a;
}

template <typename T>
static void mul(T* y, const T* x, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] *= x[i];
}

template <typename T>
static void fma_acc(T* y, const T* a, const T* b, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

// exact gelu, erf formulation
template <typename T>
static void gelu_fwd(T* y, const T* x, int64_t n) {
    for (int64_t i = 0; i < n; ++i) {
        T v = x[i];
        y[i] = T(0.5) * v * (T(1) + T(std::erf(double(v) * 0.70710678118654752440)));
    }
}

template <typename T>
static void gelu_bwd(T* dx, const T* x, const T* dy, int64_t n) {
    for (int64_t i = 0; i < n; ++i) {
        double v = double(x[i]);
        double cdf = 0.5 * (1.0 + std::erf(v * 0.70710678118654752440));
        double pdf = std::exp(-0.5 * v * v) * 0.39894228040143267794;
        dx[i] += T((cdf + v * pdf)) * dy[i];
    }
}

template <typename T>
static void silu_fwd(T* y, const T* x, int64_t n) {
    for (int64_t i = 0; i < n; ++i) {
        T s = T(1) / (T(1) + T(std::exp(-double(x[i]))));
        y[i] = x[i] * s;
    }
}

template <typename T>
static void silu_bwd(T* dx, const T* x, const T* dy, int64_t n) {
    for (int64_t i = 0; i < n; ++i) {
        double s = 1.0 / (1.0 + std::exp(-double(x[i])));
        dx[i] += T(s * (1.0 + double(x[i]) * (1.0 - s))) * dy[i];
    }
}

template <typename T>
static void softmax_rows(T* p, const T* x, int64_t rows, int64_t cols) {
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x + r * cols;
        T* pr = p + r * cols;
        T mx = xr[0];
        for (int64_t c = 1; c < cols; ++c) mx = xr[c] > mx ? xr[c] : mx;
        T sum = 0;
        for (int64_t c = 0; c < cols; ++c) {
            T e = T(std::exp(double(xr[c] - mx)));
            pr[c] = e;
            sum += e;
        }
        T inv = T(1) / sum;
        for (int64_t c = 0; c < cols; ++c) pr[c] *= inv;
    }
}

template <typename T>
static void softmax_rows_bwd(T* dx, const T* p, const T* dp, int64_t rows, int64_t cols) {
    for (int64_t r = 0; r < rows; ++r) {
        const T* pr = p + r * cols;
        const T* dpr = dp + r * cols;
        T* dxr = dx + r * cols;
        T dot = 0;
        for (int64_t c = 0; c < cols; ++c) dot += pr[c] * dpr[c];
        for (int64_t c = 0; c < cols; ++c) dxr[c] += pr[c] * (dpr[c] - dot);
    }
}

template <typename T>
static void layernorm_fwd(T* y, T* mean, T* rstd, const T* x, const T* gamma, const T* beta,
                          int64_t rows, int64_t cols, T eps) {
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x + r * cols;
        T* yr = y + r * cols;
        T mu = 0;
        for (int64_t c = 0; c < cols; ++c) mu += xr[c];
        mu /= T(cols);
        T var = 0;
        for (int64_t c = 0; c < cols; ++c) {
            T d = xr[c] - mu;
            var += d * d;
        }
        var /= T(cols);
        T rs = T(1) / T(std::sqrt(double(var + eps)));
        mean[r] = mu;
        rstd[r] = rs;
        for (int64_t c = 0; c < cols; ++c) yr[c] = (xr[c] - mu) * rs * gamma[c] + beta[c];
    }
}

template <typename T>
static void layernorm_bwd(T* dx, T* dgamma, T* dbeta, const T* dy, const T* x, const T* mean,
                          const T* rstd, const T* gamma, int64_t rows, int64_t cols) {
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x + r * cols;
        const T* dyr = dy + r * cols;
        T* dxr = dx + r * cols;
        T mu = mean[r], rs = rstd[r];
        T sum_g = 0, sum_gx = 0;
        for (int64_t c = 0; c < cols; ++c) {
            T xhat = (xr[c] - mu) * rs;
            T g = dyr[c] * gamma[c];
            sum_g += g;
            sum_gx += g * xhat;
        }
        T inv_cols = T(1) / T(cols);
        for (int64_t c = 0; c < cols; ++c) {
            T xhat = (xr[c] - mu) * rs;
            T g = dyr[c] * gamma[c];
            dxr[c] += rs * (g - inv_cols * (sum_g + xhat * sum_gx));
            dgamma[c] += dyr[c] * xhat;
            dbeta[c] += dyr[c];
        }
    }
}

template <typename T>
static T reduce_sum(const T* x, int64_t n) {
    double acc = 0;
    for (int64_t i = 0; i < n; ++i) acc += double(x[i]);
    return T(acc);
}

template <typename T>
static T reduce_sumsq(const T* x, int64_t n) {
    double acc = 0;
    for (int64_t i = 0; i < n; ++i) acc += double(x[i]) * double(x[i]);
    return T(acc);
}

template <typename T>
static void adamw(T* p, const T* g, T* m, T* v, int64_t n, T lr, T beta1, T beta2, T eps,
                  T weight_decay, int64_t step) {
    T bc1 = T(1) - T(std::pow(double(beta1), double(step)));
    T bc2 = T(1) - T(std::pow(double(beta2), double(step)));
    for (int64_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
        v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
        T mhat = m[i] / bc1;
        T vhat = v[i] / bc2;
        p[i] -= lr * (mhat / (T(std::sqrt(double(vhat))) + eps) + weight_decay * p[i]);
    }
}

} // namespace umm::kern::scalar

namespace umm::kern {

template <typename T>
static Kernels<T> make_scalar_table() {
    Kernels<T> k;
    k.gemm_nn = scalar::gemm_nn<T>;
    k.gemm_nt = scalar::gemm_nt<T>;
    k.gemm_tn = scalar::gemm_tn<T>;
    k.add = scalar::add<T>;
    k.axpy = scalar::axpy<T>;
    k.scale = scalar::scale<T>;
    k.mul = scalar::mul<T>;
    k.fma_acc = scalar::fma_acc<T>;
    k.gelu_fwd = scalar::gelu_fwd<T>;
    k.gelu_bwd = scalar::gelu_bwd<T>;
    k.silu_fwd = scalar::silu_fwd<T>;
    k.silu_bwd = scalar::silu_bwd<T>;
    k.softmax_rows = scalar::softmax_rows<T>;
    k.softmax_rows_bwd = scalar::softmax_rows_bwd<T>;
    k.layernorm_fwd = scalar::layernorm_fwd<T>;
    k.layernorm_bwd = scalar::layernorm_bwd<T>;
    k.reduce_sum = scalar::reduce_sum<T>;
    k.reduce_sumsq = scalar::reduce_sumsq<T>;
    k.adamw = scalar::adamw<T>;
    return k;
}

const Kernels<float>& scalar_table_f32() {
    static const Kernels<float> t = make_scalar_table<float>();
    return t;
}

const Kernels<double>& scalar_table_f64() {
    static const Kernels<double> t = make_scalar_table<double>();
    return t;
}

} // namespace umm::kern
