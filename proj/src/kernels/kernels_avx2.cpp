// AVX2+FMA kernel variants. Compiled with -mavx2 -mfma in its own TU; only
// reached when dispatch.cpp has verified cpu support at runtime.

#include "umm/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <cmath>

namespace umm::kern::avx2 {

static inline float hsum8(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 1));
    return _mm_cvtss_f32(lo);
}

static inline double hsum4d(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
}

// Cephes-style expf, max error ~1 ulp over the clamped range.
static inline __m256 exp256(__m256 x) {
    const __m256 hi = _mm256_set1_ps(88.3762626647949f);
    const __m256 lo = _mm256_set1_ps(-88.3762626647949f);
    const __m256 log2e = _mm256_set1_ps(1.44269504088896341f);
    const __m256 c1 = _mm256_set1_ps(0.693359375f);
    const __m256 c2 = _mm256_set1_ps(-2.12194440e-4f);
    const __m256 p0 = _mm256_set1_ps(1.9875691500e-4f);
    const __m256 p1 = _mm256_set1_ps(1.3981999507e-3f);
    const __m256 p2 = _mm256_set1_ps(8.3334519073e-3f);
    const __m256 p3 = _mm256_set1_ps(4.1665795894e-2f);
    const __m256 p4 = _mm256_set1_ps(1.6666665459e-1f);
    const __m256 p5 = _mm256_set1_ps(5.0000001201e-1f);
    const __m256 one = _mm256_set1_ps(1.0f);

    x = _mm256_min_ps(_mm256_max_ps(x, lo), hi);
    __m256 fx = _mm256_fmadd_ps(x, log2e, _mm256_set1_ps(0.5f));
    fx = _mm256_floor_ps(fx);
    x = _mm256_fnmadd_ps(fx, c1, x);
    x = _mm256_fnmadd_ps(fx, c2, x);
    __m256 z = _mm256_mul_ps(x, x);
    __m256 y = p0;
    y = _mm256_fmadd_ps(y, x, p1);
    y = _mm256_fmadd_ps(y, x, p2);
    y = _mm256_fmadd_ps(y, x, p3);
    y = _mm256_fmadd_ps(y, x, p4);
    y = _mm256_fmadd_ps(y, x, p5);
    y = _mm256_fmadd_ps(y, z, _mm256_add_ps(x, one));
    __m256i n = _mm256_cvtps_epi32(fx);
    n = _mm256_slli_epi32(_mm256_add_epi32(n, _mm256_set1_epi32(127)), 23);
    return _mm256_mul_ps(y, _mm256_castsi256_ps(n));
}

// ---- f32 gemm -------------------------------------------------------------

// 4x16 register-blocked panel: rows i..i+3, cols j..j+15. a_fetch abstracts
// the nn (A[i*K+k]) vs tn (A[k*M+i]) access pattern.
template <bool TRANS_A>
static void gemm_bcast(int64_t M, int64_t N, int64_t K, float alpha, const float* A,
                       const float* B, float beta, float* C) {
    auto a_at = [&](int64_t i, int64_t k) -> float {
        return TRANS_A ? A[k * M + i] : A[i * K + k];
    };

    int64_t i = 0;
    for (; i + 4 <= M; i += 4) {
        int64_t j = 0;
        for (; j + 16 <= N; j += 16) {
            __m256 acc[4][2];
            for (int r = 0; r < 4; ++r) {
                if (beta == 0.0f) {
                    acc[r][0] = _mm256_setzero_ps();
                    acc[r][1] = _mm256_setzero_ps();
                } else {
                    acc[r][0] = _mm256_mul_ps(_mm256_set1_ps(beta), _mm256_loadu_ps(C + (i + r) * N + j));
                    acc[r][1] = _mm256_mul_ps(_mm256_set1_ps(beta), _mm256_loadu_ps(C + (i + r) * N + j + 8));
                }
            }
            for (int64_t k = 0; k < K; ++k) {
                __m256 b0 = _mm256_loadu_ps(B + k * N + j);
                __m256 b1 = _mm256_loadu_ps(B + k * N + j + 8);
                for (int r = 0; r < 4; ++r) {
                    __m256 a = _mm256_set1_ps(alpha * a_at(i + r, k));
                    acc[r][0] = _mm256_fmadd_ps(a, b0, acc[r][0]);
                    acc[r][1] = _mm256_fmadd_ps(a, b1, acc[r][1]);
                }
            }
            for (int r = 0; r < 4; ++r) {
                _mm256_storeu_ps(C + (i + r) * N + j, acc[r][0]);
                _mm256_storeu_ps(C + (i + r) * N + j + 8, acc[r][1]);
            }
        }
        for (; j < N; ++j) {
            for (int r = 0; r < 4; ++r) {
                float acc = beta == 0.0f ? 0.0f : beta * C[(i + r) * N + j];
                for (int64_t k = 0; k < K; ++k) acc += alpha * a_at(i + r, k) * B[k * N + j];
                C[(i + r) * N + j] = acc;
            }
        }
    }
    for (; i < M; ++i) {
        int64_t j = 0;
        for (; j + 8 <= N; j += 8) {
            __m256 acc = beta == 0.0f ? _mm256_setzero_ps()
                                      : _mm256_mul_ps(_mm256_set1_ps(beta), _mm256_loadu_ps(C + i * N + j));
            for (int64_t k = 0; k < K; ++k) {
                __m256 a = _mm256_set1_ps(alpha * a_at(i, k));
                acc = _mm256_fmadd_ps(a, _mm256_loadu_ps(B + k * N + j), acc);
            }
            _mm256_storeu_ps(C + i * N + j, acc);
        }
        for (; j < N; ++j) {
            float acc = beta == 0.0f ? 0.0f : beta * C[i * N + j];
            for (int64_t k = 0; k < K; ++k) acc += alpha * a_at(i, k) * B[k * N + j];
            C[i * N + j] = acc;
        }
    }
}

static void gemm_nn(int64_t M, int64_t N, int64_t K, float alpha, const float* A, const float* B,
                    float beta, float* C) {
    gemm_bcast<false>(M, N, K, alpha, A, B, beta, C);
}

static void gemm_tn(int64_t M, int64_t N, int64_t K, float alpha, const float* A, const float* B,
                    float beta, float* C) {
    gemm_bcast<true>(M, N, K, alpha, A, B, beta, C);
}

// dot-product form: C[i,j] = A[i,:] . B[j,:]
static void gemm_nt(int64_t M, int64_t N, int64_t K, float alpha, const float* A, const float* B,
                    float beta, float* C) {
    for (int64_t i = 0; i < M; ++i) {
        const float* a = A + i * K;
        int64_t j = 0;
        for (; j + 4 <= N; j += 4) {
            __m256 acc0 = _mm256_setzero_ps();
            __m256 acc1 = _mm256_setzero_ps();
            __m256 acc2 = _mm256_setzero_ps();
            __m256 acc3 = _mm256_setzero_ps();
            const float* b0 = B + j * K;
            const float* b1 = b0 + K;
            const float* b2 = b1 + K;
            const float* b3 = b2 + K;
            int64_t k = 0;
            for (; k + 8 <= K; k += 8) {
                __m256 av = _mm256_loadu_ps(a + k);
                acc0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + k), acc0);
                acc1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + k), acc1);
                acc2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + k), acc2);
                acc3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + k), acc3);
            }
            float s0 = hsum8(acc0), s1 = hsum8(acc1), s2 = hsum8(acc2), s3 = hsum8(acc3);
            for (; k < K; ++k) {
                s0 += a[k] * b0[k];
                s1 += a[k] * b1[k];
                s2 += a[k] * b2[k];
                s3 += a[k] * b3[k];
            }
            float* c = C + i * N + j;
            if (beta == 0.0f) {
                c[0] = alpha * s0;
                c[1] = alpha * s1;
                c[2] = alpha * s2;
                c[3] = alpha * s3;
            } else {
                c[0] = alpha * s0 + beta * c[0];
                c[1] = alpha * s1 + beta * c[1];
                c[2] = alpha * s2 + beta * c[2];
                c[3] = alpha * s3 + beta * c[3];
            }
        }
        for (; j < N; ++j) {
            const float* b = B + j * K;
            __m256 acc = _mm256_setzero_ps();
            int64_t k = 0;
            for (; k + 8 <= K; k += 8) acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k), acc);
            float s = hsum8(acc);
            for (; k < K; ++k) s += a[k] * b[k];
            C[i * N + j] = beta == 0.0f ? alpha * s : alpha * s + beta * C[i * N + j];
        }
    }
}

// ---- f64 gemm (4x8 panel) -------------------------------------------------

template <bool TRANS_A>
static void dgemm_bcast(int64_t M, int64_t N, int64_t K, double alpha, const double* A,
                        const double* B, double beta, double* C) {
    auto a_at = [&](int64_t i, int64_t k) -> double {
        return TRANS_A ? A[k * M + i] : A[i * K + k];
    };
    int64_t i = 0;
    for (; i + 4 <= M; i += 4) {
        int64_t j = 0;
        for (; j + 8 <= N; j += 8) {
            __m256d acc[4][2];
            for (int r = 0; r < 4; ++r) {
                if (beta == 0.0) {
                    acc[r][0] = _mm256_setzero_pd();
                    acc[r][1] = _mm256_setzero_pd();
                } else {
                    acc[r][0] = _mm256_mul_pd(_mm256_set1_pd(beta), _mm256_loadu_pd(C + (i + r) * N + j));
                    acc[r][1] = _mm256_mul_pd(_mm256_set1_pd(beta), _mm256_loadu_pd(C + (i + r) * N + j + 4));
                }
            }
            for (int64_t k = 0; k < K; ++k) {
                __m256d b0 = _mm256_loadu_pd(B + k * N + j);
                __m256d b1 = _mm256_loadu_pd(B + k * N + j + 4);
                for (int r = 0; r < 4; ++r) {
                    __m256d a = _mm256_set1_pd(alpha * a_at(i + r, k));
                    acc[r][0] = _mm256_fmadd_pd(a, b0, acc[r][0]);
                    acc[r][1] = _mm256_fmadd_pd(a, b1, acc[r][1]);
                }
            }
            for (int r = 0; r < 4; ++r) {
                _mm256_storeu_pd(C + (i + r) * N + j, acc[r][0]);
                _mm256_storeu_pd(C + (i + r) * N + j + 4, acc[r][1]);
            }
        }
        for (; j < N; ++j) {
            for (int r = 0; r < 4; ++r) {
                double acc = beta == 0.0 ? 0.0 : beta * C[(i + r) * N + j];
                for (int64_t k = 0; k < K; ++k) acc += alpha * a_at(i + r, k) * B[k * N + j];
                C[(i + r) * N + j] = acc;
            }
        }
    }
    for (; i < M; ++i) {
        for (int64_t j = 0; j < N; ++j) {
            double acc = beta == 0.0 ? 0.0 : beta * C[i * N + j];
            for (int64_t k = 0; k < K; ++k) acc += alpha * a_at(i, k) * B[k * N + j];
            C[i * N + j] = acc;
        }
    }
}

static void dgemm_nn(int64_t M, int64_t N, int64_t K, double alpha, const double* A,
                     const double* B, double beta, double* C) {
    dgemm_bcast<false>(M, N, K, alpha, A, B, beta, C);
}

static void dgemm_tn(int64_t M, int64_t N, int64_t K, double alpha, const double* A,
                     const double* B, double beta, double* C) {
    dgemm_bcast<true>(M, N, K, alpha, A, B, beta, C);
}

static void dgemm_nt(int64_t M, int64_t N, int64_t K, double alpha, const double* A,
                     const double* B, double beta, double* C) {
    for (int64_t i = 0; i < M; ++i) {
        const double* a = A + i * K;
        for (int64_t j = 0; j < N; ++j) {
            const double* b = B + j * K;
            __m256d acc = _mm256_setzero_pd();
            int64_t k = 0;
            for (; k + 4 <= K; k += 4) acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + k), _mm256_loadu_pd(b + k), acc);
            double s = hsum4d(acc);
            for (; k < K; ++k) s += a[k] * b[k];
            C[i * N + j] = beta == 0.0 ? alpha * s : alpha * s + beta * C[i * N + j];
        }
    }
}

// ---- f32 elementwise ------------------------------------------------------

static void add_f32(float* y, const float* x, int64_t n) {
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) y[i] += x[i];
}

static void axpy_f32(float* y, float a, const float* x, int64_t n) {
    __m256 av = _mm256_set1_ps(a);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] += a * x[i];
}

static void scale_f32(float* y, float a, int64_t n) {
    __m256 av = _mm256_set1_ps(a);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_mul_ps(av, _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] *= a;
}

static void mul_f32(float* y, const float* x, int64_t n) {
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(y + i), _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) y[i] *= x[i];
}

static void fma_acc_f32(float* y, const float* a, const float* b, int64_t n) {
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i),
                                                _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] += a[i] * b[i];
}

static void silu_fwd_f32(float* y, const float* x, int64_t n) {
    const __m256 one = _mm256_set1_ps(1.0f);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 xv = _mm256_loadu_ps(x + i);
        __m256 s = _mm256_div_ps(one, _mm256_add_ps(one, exp256(_mm256_sub_ps(_mm256_setzero_ps(), xv))));
        _mm256_storeu_ps(y + i, _mm256_mul_ps(xv, s));
    }
    for (; i < n; ++i) {
        float s = 1.0f / (1.0f + std::exp(-x[i]));
        y[i] = x[i] * s;
    }
}

static void silu_bwd_f32(float* dx, const float* x, const float* dy, int64_t n) {
    const __m256 one = _mm256_set1_ps(1.0f);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 xv = _mm256_loadu_ps(x + i);
        __m256 s = _mm256_div_ps(one, _mm256_add_ps(one, exp256(_mm256_sub_ps(_mm256_setzero_ps(), xv))));
        // d/dx x*s = s*(1 + x*(1-s))
        __m256 g = _mm256_mul_ps(s, _mm256_fmadd_ps(xv, _mm256_sub_ps(one, s), one));
        _mm256_storeu_ps(dx + i, _mm256_fmadd_ps(g, _mm256_loadu_ps(dy + i), _mm256_loadu_ps(dx + i)));
    }
    for (; i < n; ++i) {
        float s = 1.0f / (1.0f + std::exp(-x[i]));
        dx[i] += s * (1.0f + x[i] * (1.0f - s)) * dy[i];
    }
}

static void softmax_rows_f32(float* p, const float* x, int64_t rows, int64_t cols) {
    for (int64_t r = 0; r < rows; ++r) {
        const float* xr = x + r * cols;
        float* pr = p + r * cols;
        __m256 mxv = _mm256_set1_ps(-3.4028235e38f);
        int64_t c = 0;
        for (; c + 8 <= cols; c += 8) mxv = _mm256_max_ps(mxv, _mm256_loadu_ps(xr + c));
        float mx = -3.4028235e38f;
        {
            float tmp[8];
            _mm256_storeu_ps(tmp, mxv);
            for (float t : tmp) mx = t > mx ? t : mx;
        }
        for (; c < cols; ++c) mx = xr[c] > mx ? xr[c] : mx;

        __m256 mxb = _mm256_set1_ps(mx);
        __m256 sumv = _mm256_setzero_ps();
        c = 0;
        for (; c + 8 <= cols; c += 8) {
            __m256 e = exp256(_mm256_sub_ps(_mm256_loadu_ps(xr + c), mxb));
            _mm256_storeu_ps(pr + c, e);
            sumv = _mm256_add_ps(sumv, e);
        }
        float sum = hsum8(sumv);
        for (; c < cols; ++c) {
            float e = std::exp(xr[c] - mx);
            pr[c] = e;
            sum += e;
        }
        scale_f32(pr, 1.0f / sum, cols);
    }
}

static void softmax_rows_bwd_f32(float* dx, const float* p, const float* dp, int64_t rows, int64_t cols) {
    for (int64_t r = 0; r < rows; ++r) {
        const float* pr = p + r * cols;
        const float* dpr = dp + r * cols;
        float* dxr = dx + r * cols;
        __m256 dotv = _mm256_setzero_ps();
        int64_t c = 0;
        for (; c + 8 <= cols; c += 8)
            dotv = _mm256_fmadd_ps(_mm256_loadu_ps(pr + c), _mm256_loadu_ps(dpr + c), dotv);
        float dot = hsum8(dotv);
        for (; c < cols; ++c) dot += pr[c] * dpr[c];
        __m256 dotb = _mm256_set1_ps(dot);
        c = 0;
        for (; c + 8 <= cols; c += 8) {
            __m256 g = _mm256_mul_ps(_mm256_loadu_ps(pr + c), _mm256_sub_ps(_mm256_loadu_ps(dpr + c), dotb));
            _mm256_storeu_ps(dxr + c, _mm256_add_ps(_mm256_loadu_ps(dxr + c), g));
        }
        for (; c < cols; ++c) dxr[c] += pr[c] * (dpr[c] - dot);
    }
}

static void layernorm_fwd_f32(float* y, float* mean, float* rstd, const float* x, const float* gamma,
                              const float* beta, int64_t rows, int64_t cols, float eps) {
    for (int64_t r = 0; r < rows; ++r) {
        const float* xr = x + r * cols;
        float* yr = y + r * cols;
        __m256 sv = _mm256_setzero_ps();
        int64_t c = 0;
        for (; c + 8 <= cols; c += 8) sv = _mm256_add_ps(sv, _mm256_loadu_ps(xr + c));
        float mu = hsum8(sv);
        for (; c < cols; ++c) mu += xr[c];
        mu /= float(cols);

        __m256 mub = _mm256_set1_ps(mu);
        __m256 vv = _mm256_setzero_ps();
        c = 0;
        for (; c + 8 <= cols; c += 8) {
            __m256 d = _mm256_sub_ps(_mm256_loadu_ps(xr + c), mub);
            vv = _mm256_fmadd_ps(d, d, vv);
        }
        float var = hsum8(vv);
        for (; c < cols; ++c) {
            float d = xr[c] - mu;
            var += d * d;
        }
        var /= float(cols);
        float rs = 1.0f / std::sqrt(var + eps);
        mean[r] = mu;
        rstd[r] = rs;
        __m256 rsb = _mm256_set1_ps(rs);
        c = 0;
        for (; c + 8 <= cols; c += 8) {
            __m256 xhat = _mm256_mul_ps(_mm256_sub_ps(_mm256_loadu_ps(xr + c), mub), rsb);
            _mm256_storeu_ps(yr + c, _mm256_fmadd_ps(xhat, _mm256_loadu_ps(gamma + c), _mm256_loadu_ps(beta + c)));
        }
        for (; c < cols; ++c) yr[c] = (xr[c] - mu) * rs * gamma[c] + beta[c];
    }
}

static void layernorm_bwd_f32(float* dx, float* dgamma, float* dbeta, const float* dy, const float* x,
                              const float* mean, const float* rstd, const float* gamma, int64_t rows,
                              int64_t cols) {
    for (int64_t r = 0; r < rows; ++r) {
        const float* xr = x + r * cols;
        const float* dyr = dy + r * cols;
        float* dxr = dx + r * cols;
        float mu = mean[r], rs = rstd[r];
        __m256 mub = _mm256_set1_ps(mu), rsb = _mm256_set1_ps(rs);
        __m256 sgv = _mm256_setzero_ps(), sgxv = _mm256_setzero_ps();
        int64_t c = 0;
        for (; c + 8 <= cols; c += 8) {
            __m256 xhat = _mm256_mul_ps(_mm256_sub_ps(_mm256_loadu_ps(xr + c), mub), rsb);
            __m256 g = _mm256_mul_ps(_mm256_loadu_ps(dyr + c), _mm256_loadu_ps(gamma + c));
            sgv = _mm256_add_ps(sgv, g);
            sgxv = _mm256_fmadd_ps(g, xhat, sgxv);
        }
        float sum_g = hsum8(sgv), sum_gx = hsum8(sgxv);
        for (; c < cols; ++c) {
            float xhat = (xr[c] - mu) * rs;
            float g = dyr[c] * gamma[c];
            sum_g += g;
            sum_gx += g * xhat;
        }
        float inv_cols = 1.0f / float(cols);
        __m256 sgb = _mm256_set1_ps(sum_g), sgxb = _mm256_set1_ps(sum_gx), icb = _mm256_set1_ps(inv_cols);
        c = 0;
        for (; c + 8 <= cols; c += 8) {
            __m256 xhat = _mm256_mul_ps(_mm256_sub_ps(_mm256_loadu_ps(xr + c), mub), rsb);
            __m256 dyv = _mm256_loadu_ps(dyr + c);
            __m256 g = _mm256_mul_ps(dyv, _mm256_loadu_ps(gamma + c));
            __m256 corr = _mm256_mul_ps(icb, _mm256_fmadd_ps(xhat, sgxb, sgb));
            _mm256_storeu_ps(dxr + c, _mm256_fmadd_ps(rsb, _mm256_sub_ps(g, corr), _mm256_loadu_ps(dxr + c)));
            _mm256_storeu_ps(dgamma + c, _mm256_fmadd_ps(dyv, xhat, _mm256_loadu_ps(dgamma + c)));
            _mm256_storeu_ps(dbeta + c, _mm256_add_ps(dyv, _mm256_loadu_ps(dbeta + c)));
        }
        for (; c < cols; ++c) {
            float xhat = (xr[c] - mu) * rs;
            float g = dyr[c] * gamma[c];
            dxr[c] += rs * (g - inv_cols * (sum_g + xhat * sum_gx));
            dgamma[c] += dyr[c] * xhat;
            dbeta[c] += dyr[c];
        }
    }
}

static float reduce_sum_f32(const float* x, int64_t n) {
    // pairwise-ish: accumulate in 8 lanes then hsum; deterministic order
    __m256 acc = _mm256_setzero_ps();
    int64_t i = 0;
    double tail = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
    for (; i < n; ++i) tail += double(x[i]);
    return float(double(hsum8(acc)) + tail);
}

static float reduce_sumsq_f32(const float* x, int64_t n) {
    __m256 acc = _mm256_setzero_ps();
    int64_t i = 0;
    double tail = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 v = _mm256_loadu_ps(x + i);
        acc = _mm256_fmadd_ps(v, v, acc);
    }
    for (; i < n; ++i) tail += double(x[i]) * double(x[i]);
    return float(double(hsum8(acc)) + tail);
}

static void adamw_f32(float* p, const float* g, float* m, float* v, int64_t n, float lr, float beta1,
                      float beta2, float eps, float weight_decay, int64_t step) {
    float bc1 = 1.0f - float(std::pow(double(beta1), double(step)));
    float bc2 = 1.0f - float(std::pow(double(beta2), double(step)));
    __m256 b1 = _mm256_set1_ps(beta1), ob1 = _mm256_set1_ps(1.0f - beta1);
    __m256 b2 = _mm256_set1_ps(beta2), ob2 = _mm256_set1_ps(1.0f - beta2);
    __m256 ibc1 = _mm256_set1_ps(1.0f / bc1), ibc2 = _mm256_set1_ps(1.0f / bc2);
    __m256 lrv = _mm256_set1_ps(lr), epsv = _mm256_set1_ps(eps), wdv = _mm256_set1_ps(weight_decay);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 gv = _mm256_loadu_ps(g + i);
        __m256 mv = _mm256_fmadd_ps(ob1, gv, _mm256_mul_ps(b1, _mm256_loadu_ps(m + i)));
        __m256 vv = _mm256_fmadd_ps(ob2, _mm256_mul_ps(gv, gv), _mm256_mul_ps(b2, _mm256_loadu_ps(v + i)));
        _mm256_storeu_ps(m + i, mv);
        _mm256_storeu_ps(v + i, vv);
        __m256 mhat = _mm256_mul_ps(mv, ibc1);
        __m256 vhat = _mm256_mul_ps(vv, ibc2);
        __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), epsv);
        __m256 pv = _mm256_loadu_ps(p + i);
        __m256 upd = _mm256_fmadd_ps(wdv, pv, _mm256_div_ps(mhat, denom));
        _mm256_storeu_ps(p + i, _mm256_fnmadd_ps(lrv, upd, pv));
    }
    for (; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
        float mhat = m[i] / bc1;
        float vhat = v[i] / bc2;
        p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p[i]);
    }
}

} // namespace umm::kern::avx2

namespace umm::kern {

const Kernels<float>& scalar_table_f32();
const Kernels<double>& scalar_table_f64();

const Kernels<float>& avx2_table_f32() {
    static const Kernels<float> t = [] {
        Kernels<float> k = scalar_table_f32(); // unvectorized entries keep the reference impl
        k.gemm_nn = avx2::gemm_nn;
        k.gemm_nt = avx2::gemm_nt;
        k.gemm_tn = avx2::gemm_tn;
        k.add = avx2::add_f32;
        k.axpy = avx2::axpy_f32;
        k.scale = avx2::scale_f32;
        k.mul = avx2::mul_f32;
        k.fma_acc = avx2::fma_acc_f32;
        k.silu_fwd = avx2::silu_fwd_f32;
        k.silu_bwd = avx2::silu_bwd_f32;
        k.softmax_rows = avx2::softmax_rows_f32;
        k.softmax_rows_bwd = avx2::softmax_rows_bwd_f32;
        k.layernorm_fwd = avx2::layernorm_fwd_f32;
        k.layernorm_bwd = avx2::layernorm_bwd_f32;
        k.reduce_sum = avx2::reduce_sum_f32;
        k.reduce_sumsq = avx2::reduce_sumsq_f32;
        k.adamw = avx2::adamw_f32;
        return k;
    }();
    return t;
}

const Kernels<double>& avx2_table_f64() {
    static const Kernels<double> t = [] {
        Kernels<double> k = scalar_table_f64();
        k.gemm_nn = avx2::dgemm_nn;
        k.gemm_nt = avx2::dgemm_nt;
        k.gemm_tn = avx2::dgemm_tn;
        return k;
    }();
    return t;
}

} // namespace umm::kern

#endif // __AVX2__ && __FMA__
