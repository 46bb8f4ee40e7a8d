#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "umm/tape.hpp"

// Differentiable ops over tape Vars. Each op computes eagerly through the
// dispatched kernels and records a reverse closure. Gradients accumulate
// (+=) so a value may fan out to several consumers.

namespace umm {

namespace detail {

template <typename T>
inline Var<T> make_op(Tape<T>& tp, Tensor<T> value, std::vector<int> parents,
                      typename Tape<T>::BackwardFn bwd) {
    bool req = false;
    for (int p : parents) req = req || tp.needs_grad(p);
    return {&tp, tp.emplace(std::move(value), req, req ? std::move(bwd) : nullptr)};
}

inline void axis_split(const Shape& s, int dim, int64_t& outer, int64_t& inner) {
    outer = 1;
    inner = 1;
    for (int i = 0; i < dim; ++i) outer *= s[size_t(i)];
    for (size_t i = size_t(dim) + 1; i < s.size(); ++i) inner *= s[i];
}

} // namespace detail

// ---- matmul family ----------------------------------------------------------

// x (..., K) @ w (K, N) -> (..., N)
template <typename T>
Var<T> matmul(Var<T> x, Var<T> w) {
    auto& tp = *x.tape;
    const auto& K = kern::active<T>();
    int64_t k = x.dim(-1), n = w.dim(1), m = x.val().numel() / k;
    Shape out_shape = x.shape();
    out_shape.back() = n;
    Tensor<T> y(out_shape);
    K.gemm_nn(m, n, k, T(1), x.val().data(), w.val().data(), T(0), y.data());
    int xid = x.id, wid = w.id;
    return detail::make_op<T>(tp, std::move(y), {xid, wid}, [=](Tape<T>& t, int self) {
        const auto& kk = kern::active<T>();
        const T* gy = t.grad(self).data();
        if (t.needs_grad(xid))
            kk.gemm_nt(m, k, n, T(1), gy, t.value(wid).data(), T(1), t.grad(xid).data());
        if (t.needs_grad(wid))
            kk.gemm_tn(k, n, m, T(1), t.value(xid).data(), gy, T(1), t.grad(wid).data());
    });
}

// y (..., N) += b (N)
template <typename T>
Var<T> bias_add(Var<T> x, Var<T> b) {
    auto& tp = *x.tape;
    int64_t n = b.val().numel(), rows = x.val().numel() / n;
    Tensor<T> y = x.val().clone();
    const auto& K = kern::active<T>();
    for (int64_t r = 0; r < rows; ++r) K.add(y.data() + r * n, b.val().data(), n);
    int xid = x.id, bid = b.id;
    return detail::make_op<T>(tp, std::move(y), {xid, bid}, [=](Tape<T>& t, int self) {
        const auto& kk = kern::active<T>();
        const T* gy = t.grad(self).data();
        if (t.needs_grad(xid)) kk.add(t.grad(xid).data(), gy, rows * n);
        if (t.needs_grad(bid)) {
            T* gb = t.grad(bid).data();
            for (int64_t r = 0; r < rows; ++r) kk.add(gb, gy + r * n, n);
        }
    });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
    return bias_add(matmul(x, w), b);
}

// batched (S, M, K) x (S, K, N) -> (S, M, N)
template <typename T>
Var<T> bmm_nn(Var<T> a, Var<T> b) {
    auto& tp = *a.tape;
    int64_t S = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(2);
    Tensor<T> y({S, M, N});
    const auto& kk = kern::active<T>();
    for (int64_t s = 0; s < S; ++s)
        kk.gemm_nn(M, N, K, T(1), a.val().data() + s * M * K, b.val().data() + s * K * N, T(0),
                   y.data() + s * M * N);
    int aid = a.id, bid = b.id;
    return detail::make_op<T>(tp, std::move(y), {aid, bid}, [=](Tape<T>& t, int self) {
        const auto& k2 = kern::active<T>();
        const T* gy = t.grad(self).data();
        for (int64_t s = 0; s < S; ++s) {
            const T* gys = gy + s * M * N;
            if (t.needs_grad(aid))
                k2.gemm_nt(M, K, N, T(1), gys, t.value(bid).data() + s * K * N, T(1),
                           t.grad(aid).data() + s * M * K);
            if (t.needs_grad(bid))
                k2.gemm_tn(K, N, M, T(1), t.value(aid).data() + s * M * K, gys, T(1),
                           t.grad(bid).data() + s * K * N);
        }
    });
}

// batched (S, M, K) x (S, N, K)^T -> (S, M, N), optionally scaled
template <typename T>
Var<T> bmm_nt(Var<T> a, Var<T> b, T alpha = T(1)) {
    auto& tp = *a.tape;
    int64_t S = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(1);
    Tensor<T> y({S, M, N});
    const auto& kk = kern::active<T>();
    for (int64_t s = 0; s < S; ++s)
        kk.gemm_nt(M, N, K, alpha, a.val().data() + s * M * K, b.val().data() + s * N * K, T(0),
                   y.data() + s * M * N);
    int aid = a.id, bid = b.id;
    return detail::make_op<T>(tp, std::move(y), {aid, bid}, [=](Tape<T>& t, int self) {
        const auto& k2 = kern::active<T>();
        const T* gy = t.grad(self).data();
        for (int64_t s = 0; s < S; ++s) {
            const T* gys = gy + s * M * N;
            if (t.needs_grad(aid))
                k2.gemm_nn(M, K, N, alpha, gys, t.value(bid).data() + s * N * K, T(1),
                           t.grad(aid).data() + s * M * K);
            if (t.needs_grad(bid))
                k2.gemm_tn(N, K, M, alpha, gys, t.value(aid).data() + s * M * K, T(1),
                           t.grad(bid).data() + s * N * K);
        }
    });
}

// ---- elementwise ------------------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    auto& tp = *a.tape;
    Tensor<T> y = a.val().clone();
    kern::active<T>().add(y.data(), b.val().data(), y.numel());
    int aid = a.id, bid = b.id;
    int64_t n = y.numel();
    return detail::make_op<T>(tp, std::move(y), {aid, bid}, [=](Tape<T>& t, int self) {
        const auto& kk = kern::active<T>();
        const T* gy = t.grad(self).data();
        if (t.needs_grad(aid)) kk.add(t.grad(aid).data(), gy, n);
        if (t.needs_grad(bid)) kk.add(t.grad(bid).data(), gy, n);
    });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    auto& tp = *a.tape;
    Tensor<T> y = a.val().clone();
    kern::active<T>().axpy(y.data(), T(-1), b.val().data(), y.numel());
    int aid = a.id, bid = b.id;
    int64_t n = y.numel();
    return detail::make_op<T>(tp, std::move(y), {aid, bid}, [=](Tape<T>& t, int self) {
        const auto& kk = kern::active<T>();
        const T* gy = t.grad(self).data();
        if (t.needs_grad(aid)) kk.add(t.grad(aid).data(), gy, n);
        if (t.needs_grad(bid)) kk.axpy(t.grad(bid).data(), T(-1), gy, n);
    });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    auto& tp = *a.tape;
    Tensor<T> y = a.val().clone();
    kern::active<T>().mul(y.data(), b.val().data(), y.numel());
    int aid = a.id, bid = b.id;
    int64_t n = y.numel();
    return detail::make_op<T>(tp, std::move(y), {aid, bid}, [=](Tape<T>& t, int self) {
        const auto& kk = kern::active<T>();
        const T* gy = t.grad(self).data();
        if (t.needs_grad(aid)) kk.fma_acc(t.grad(aid).data(), gy, t.value(bid).data(), n);
        if (t.needs_grad(bid)) kk.fma_acc(t.grad(bid).data(), gy, t.value(aid).data(), n);
    });
}

// y = a*x + b, scalar a/b
template <typename T>
Var<T> affine(Var<T> x, T a, T b) {
    auto& tp = *x.tape;
    Tensor<T> y = x.val().clone();
    int64_t n = y.numel();
    T* p = y.data();
    for (int64_t i = 0; i < n; ++i) p[i] = a * p[i] + b;
    int xid = x.id;
    return detail::make_op<T>(tp, std::move(y), {xid}, [=](Tape<T>& t, int self) {
        if (t.needs_grad(xid)) kern::active<T>().axpy(t.grad(xid).data(), a, t.grad(self).data(), n);
    });
}

template <typename T>
Var<T> scale(Var<T> x, T a) {
    return affine(x, a, T(0));
}

template <typename T>
Var<T> exp_op(Var<T> x) {
    auto& tp = *x.tape;
    Tensor<T> y = x.val().clone();
    int64_t n = y.numel();
    T* p = y.data();
    for (int64_t i = 0; i < n; ++i) p[i] = T(std::exp(double(p[i])));
    int xid = x.id;
    return detail::make_op<T>(tp, std::move(y), {xid}, [=](Tape<T>& t, int self) {
        if (t.needs_grad(xid))
            kern::active<T>().fma_acc(t.grad(xid).data(), t.grad(self).data(), t.value(self).data(), n);
    });
}

template <typename T>
Var<T> gelu(Var<T> x) {
    auto& tp = *x.tape;
    Tensor<T> y(x.shape());
    int64_t n = y.numel();
    kern::active<T>().gelu_fwd(y.data(), x.val().data(), n);
    int xid = x.id;
    return detail::make_op<T>(tp, std::move(y), {xid}, [=](Tape<T>& t, int self) {
        if (t.needs_grad(xid))
            kern::active<T>().gelu_bwd(t.grad(xid).data(), t.value(xid).data(), t.grad(self).data(), n);
    });
}

template <typename T>
Var<T> silu(Var<T> x) {
    auto& tp = *x.tape;
    Tensor<T> y(x.shape());
    int64_t n = y.numel();
    kern::active<T>().silu_fwd(y.data(), x.val().data(), n);
    int xid = x.id;
    return detail::make_op<T>(tp, std::move(y), {xid}, [=](Tape<T>& t, int self) {
        if (t.needs_grad(xid))
            kern::active<T>().silu_bwd(t.grad(xid).data(), t.value(xid).data(), t.grad(self).data(), n);
    });
}

// ---- normalization / softmax -------------------------------------------------

template <typename T>
Var<T> layernorm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5)) {
    auto& tp = *x.tape;
    int64_t cols = x.dim(-1), rows = x.val().numel() / cols;
    Tensor<T> y(x.shape());
    auto mean = Tensor<T>::zeros({rows});
    auto rstd = Tensor<T>::zeros({rows});
    kern::active<T>().layernorm_fwd(y.data(), mean.data(), rstd.data(), x.val().data(),
                                    gamma.val().data(), beta.val().data(), rows, cols, eps);
    int xid = x.id, gid = gamma.id, bid = beta.id;
    return detail::make_op<T>(tp, std::move(y), {xid, gid, bid}, [=](Tape<T>& t, int self) {
        const auto& kk = kern::active<T>();
        Tensor<T> scratch_dx, scratch_dg, scratch_db;
        T* dx = t.needs_grad(xid) ? t.grad(xid).data()
                                : (scratch_dx = Tensor<T>::zeros({rows * cols})).data();
        T* dg = t.needs_grad(gid) ? t.grad(gid).data() : (scratch_dg = Tensor<T>::zeros({cols})).data();
        T* db = t.needs_grad(bid) ? t.grad(bid).data() : (scratch_db = Tensor<T>::zeros({cols})).data();
        kk.layernorm_bwd(dx, dg, db, t.grad(self).data(), t.value(xid).data(), mean.data(),
                         rstd.data(), t.value(gid).data(), rows, cols);
    });
}

template <typename T>
Var<T> softmax_last(Var<T> x) {
    auto& tp = *x.tape;
    int64_t cols = x.dim(-1), rows = x.val().numel() / cols;
    Tensor<T> p(x.shape());
    kern::active<T>().softmax_rows(p.data(), x.val().data(), rows, cols);
    int xid = x.id;
    return detail::make_op<T>(tp, std::move(p), {xid}, [=](Tape<T>& t, int self) {
        if (t.needs_grad(xid))
            kern::active<T>().softmax_rows_bwd(t.grad(xid).data(), t.value(self).data(),
                                               t.grad(self).data(), rows, cols);
    });
}

// scores (B*H, L, L) + mask (B, L, L); mask is a plain tensor, no grad
template <typename T>
Var<T> add_mask(Var<T> scores, const Tensor<T>& mask, int64_t heads) {
    auto& tp = *scores.tape;
    int64_t S = scores.dim(0), ll = scores.dim(1) * scores.dim(2);
    Tensor<T> y = scores.val().clone();
    const auto& kk = kern::active<T>();
    for (int64_t s = 0; s < S; ++s) kk.add(y.data() + s * ll, mask.data() + (s / heads) * ll, ll);
    int xid = scores.id;
    int64_t n = y.numel();
    return detail::make_op<T>(tp, std::move(y), {xid}, [=](Tape<T>& t, int self) {
        if (t.needs_grad(xid)) kern::active<T>().add(t.grad(xid).data(), t.grad(self).data(), n);
    });
}

// ---- rotary embedding ---------------------------------------------------------

// x (B, H, L, D), cos/sin (B, L, D/2); rotates consecutive pairs
template <typename T>
Var<T> rope(Var<T> x, const Tensor<T>& cos_t, const Tensor<T>& sin_t) {
    auto& tp = *x.tape;
    int64_t B = x.dim(0), H = x.dim(1), L = x.dim(2), D = x.dim(3), P = D / 2;
    Tensor<T> y(x.shape());
    const T* xv = x.val().data();
    T* yv = y.data();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t h = 0; h < H; ++h)
            for (int64_t l = 0; l < L; ++l) {
                const T* c = cos_t.data() + (b * L + l) * P;
                const T* s = sin_t.data() + (b * L + l) * P;
                const T* xp = xv + ((b * H + h) * L + l) * D;
                T* yp = yv + ((b * H + h) * L + l) * D;
                for (int64_t p = 0; p < P; ++p) {
                    T x0 = xp[2 * p], x1 = xp[2 * p + 1];
                    yp[2 * p] = x0 * c[p] - x1 * s[p];
                    yp[2 * p + 1] = x0 * s[p] + x1 * c[p];
                }
            }
    int xid = x.id;
    return detail::make_op<T>(tp, std::move(y), {xid}, [=](Tape<T>& t, int self) {
        if (!t.needs_grad(xid)) return;
        const T* gy = t.grad(self).data();
        T* gx = t.grad(xid).data();
        for (int64_t b = 0; b < B; ++b)
            for (int64_t h = 0; h < H; ++h)
                for (int64_t l = 0; l < L; ++l) {
                    const T* c = cos_t.data() + (b * L + l) * P;
                    const T* s = sin_t.data() + (b * L + l) * P;
                    const T* gp = gy + ((b * H + h) * L + l) * D;
                    T* gxp = gx + ((b * H + h) * L + l) * D;
                    for (int64_t p = 0; p < P; ++p) {
                        T g0 = gp[2 * p], g1 = gp[2 * p + 1];
                        gxp[2 * p] += g0 * c[p] + g1 * s[p];
                        gxp[2 * p + 1] += -g0 * s[p] + g1 * c[p];
                    }
                }
    });
}

// ---- shape ops ------------------------------------------------------------------

template <typename T>
Var<T> reshape(Var<T> x, Shape s) {
    auto& tp = *x.tape;
    Tensor<T> y = x.val().reshaped(std::move(s));
    int xid = x.id;
    int64_t n = y.numel();
    return detail::make_op<T>(tp, std::move(y), {xid}, [=](Tape<T>& t, int self) {
        if (t.needs_grad(xid)) kern::active<T>().add(t.grad(xid).data(), t.grad(self).data(), n);
    });
}

// (B, X, Y, Z) -> (B, Y, X, Z)
template <typename T>
Var<T> transpose12(Var<T> x) {
    auto& tp = *x.tape;
    int64_t B = x.dim(0), X = x.dim(1), Y = x.dim(2), Z = x.dim(3);
    Tensor<T> y({B, Y, X, Z});
    const T* xv = x.val().data();
    T* yv = y.data();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < X; ++i)
            for (int64_t j = 0; j < Y; ++j)
                std::memcpy(yv + ((b * Y + j) * X + i) * Z, xv + ((b * X + i) * Y + j) * Z,
                            size_t(Z) * sizeof(T));
    int xid = x.id;
    return detail::make_op<T>(tp, std::move(y), {xid}, [=](Tape<T>& t, int self) {
        if (!t.needs_grad(xid)) return;
        const T* gy = t.grad(self).data();
        T* gx = t.grad(xid).data();
        const auto& kk = kern::active<T>();
        for (int64_t b = 0; b < B; ++b)
            for (int64_t j = 0; j < Y; ++j)
                for (int64_t i = 0; i < X; ++i)
                    kk.add(gx + ((b * X + i) * Y + j) * Z, gy + ((b * Y + j) * X + i) * Z, Z);
    });
}

template <typename T>
Var<T> slice_axis(Var<T> x, int dim, int64_t start, int64_t len) {
    auto& tp = *x.tape;
    int64_t outer, inner;
    detail::axis_split(x.shape(), dim, outer, inner);
    int64_t D = x.dim(dim);
    Shape ys = x.shape();
    ys[size_t(dim)] = len;
    Tensor<T> y(ys);
    const T* xv = x.val().data();
    T* yv = y.data();
    for (int64_t o = 0; o < outer; ++o)
        std::memcpy(yv + o * len * inner, xv + (o * D + start) * inner, size_t(len * inner) * sizeof(T));
    int xid = x.id;
    return detail::make_op<T>(tp, std::move(y), {xid}, [=](Tape<T>& t, int self) {
        if (!t.needs_grad(xid)) return;
        const T* gy = t.grad(self).data();
        T* gx = t.grad(xid).data();
        const auto& kk = kern::active<T>();
        for (int64_t o = 0; o < outer; ++o)
            kk.add(gx + (o * D + start) * inner, gy + o * len * inner, len * inner);
    });
}

template <typename T>
Var<T> concat_axis(std::vector<Var<T>> parts, int dim) {
    auto& tp = *parts[0].tape;
    Shape ys = parts[0].shape();
    int64_t total = 0;
    for (auto& p : parts) total += p.dim(dim);
    ys[size_t(dim)] = total;
    int64_t outer, inner;
    detail::axis_split(ys, dim, outer, inner);
    Tensor<T> y(ys);
    T* yv = y.data();
    std::vector<int> ids;
    std::vector<int64_t> lens;
    int64_t off = 0;
    for (auto& p : parts) {
        int64_t len = p.dim(dim);
        const T* pv = p.val().data();
        for (int64_t o = 0; o < outer; ++o)
            std::memcpy(yv + (o * total + off) * inner, pv + o * len * inner,
                        size_t(len * inner) * sizeof(T));
        ids.push_back(p.id);
        lens.push_back(len);
        off += len;
    }
    return detail::make_op<T>(tp, std::move(y), ids, [=](Tape<T>& t, int self) {
        const T* gy = t.grad(self).data();
        const auto& kk = kern::active<T>();
        int64_t o2 = 0;
        for (size_t i = 0; i < ids.size(); ++i) {
            if (t.needs_grad(ids[i])) {
                T* gx = t.grad(ids[i]).data();
                for (int64_t o = 0; o < outer; ++o)
                    kk.add(gx + o * lens[i] * inner, gy + (o * total + o2) * inner, lens[i] * inner);
            }
            o2 += lens[i];
        }
    });
}

// x (B, L, R) gathered at idx (B, K) -> (B, K, R)
template <typename T>
Var<T> gather_rows(Var<T> x, const std::vector<int64_t>& idx, int64_t Kn) {
    auto& tp = *x.tape;
    int64_t B = x.dim(0), L = x.dim(1), R = x.dim(2);
    Tensor<T> y({B, Kn, R});
    const T* xv = x.val().data();
    T* yv = y.data();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t k = 0; k < Kn; ++k)
            std::memcpy(yv + (b * Kn + k) * R, xv + (b * L + idx[size_t(b * Kn + k)]) * R,
                        size_t(R) * sizeof(T));
    int xid = x.id;
    auto idx_copy = idx;
    return detail::make_op<T>(tp, std::move(y), {xid}, [=](Tape<T>& t, int self) {
        if (!t.needs_grad(xid)) return;
        const T* gy = t.grad(self).data();
        T* gx = t.grad(xid).data();
        const auto& kk = kern::active<T>();
        for (int64_t b = 0; b < B; ++b)
            for (int64_t k = 0; k < Kn; ++k)
                kk.add(gx + (b * L + idx_copy[size_t(b * Kn + k)]) * R, gy + (b * Kn + k) * R, R);
    });
}

// ---- embeddings / losses -----------------------------------------------------------

// table (V, d), ids (N) -> (N, d); out-of-range id is a caller bug
template <typename T>
Var<T> embedding(Var<T> table, const std::vector<int>& ids) {
    auto& tp = *table.tape;
    int64_t d = table.dim(1), N = int64_t(ids.size());
    Tensor<T> y({N, d});
    const T* tv = table.val().data();
    for (int64_t i = 0; i < N; ++i)
        std::memcpy(y.data() + i * d, tv + int64_t(ids[size_t(i)]) * d, size_t(d) * sizeof(T));
    int tid = table.id;
    auto ids_copy = ids;
    return detail::make_op<T>(tp, std::move(y), {tid}, [=](Tape<T>& t, int self) {
        if (!t.needs_grad(tid)) return;
        const T* gy = t.grad(self).data();
        T* gt = t.grad(tid).data();
        const auto& kk = kern::active<T>();
        for (int64_t i = 0; i < N; ++i) kk.add(gt + int64_t(ids_copy[size_t(i)]) * d, gy + i * d, d);
    });
}

template <typename T>
Var<T> sum_all(Var<T> x) {
    auto& tp = *x.tape;
    Tensor<T> y({1});
    y[0] = kern::active<T>().reduce_sum(x.val().data(), x.val().numel());
    int xid = x.id;
    int64_t n = x.val().numel();
    return detail::make_op<T>(tp, std::move(y), {xid}, [=](Tape<T>& t, int self) {
        if (!t.needs_grad(xid)) return;
        T g = t.grad(self)[0];
        T* gx = t.grad(xid).data();
        for (int64_t i = 0; i < n; ++i) gx[i] += g;
    });
}

template <typename T>
Var<T> mean_all(Var<T> x) {
    return scale(sum_all(x), T(1) / T(x.val().numel()));
}

// fused mean((a-b)^2)
template <typename T>
Var<T> mse(Var<T> a, Var<T> b) {
    auto& tp = *a.tape;
    int64_t n = a.val().numel();
    const T* av = a.val().data();
    const T* bv = b.val().data();
    double acc = 0;
    for (int64_t i = 0; i < n; ++i) {
        double d = double(av[i]) - double(bv[i]);
        acc += d * d;
    }
    Tensor<T> y({1});
    y[0] = T(acc / double(n));
    int aid = a.id, bid = b.id;
    return detail::make_op<T>(tp, std::move(y), {aid, bid}, [=](Tape<T>& t, int self) {
        T s = t.grad(self)[0] * T(2) / T(n);
        const T* a2 = t.value(aid).data();
        const T* b2 = t.value(bid).data();
        if (t.needs_grad(aid)) {
            T* ga = t.grad(aid).data();
            for (int64_t i = 0; i < n; ++i) ga[i] += s * (a2[i] - b2[i]);
        }
        if (t.needs_grad(bid)) {
            T* gb = t.grad(bid).data();
            for (int64_t i = 0; i < n; ++i) gb[i] -= s * (a2[i] - b2[i]);
        }
    });
}

// mean cross-entropy over rows whose target >= 0
template <typename T>
Var<T> cross_entropy(Var<T> logits, const std::vector<int>& targets) {
    auto& tp = *logits.tape;
    int64_t V = logits.dim(-1), N = logits.val().numel() / V;
    auto probs = std::make_shared<Tensor<T>>(Shape{N, V});
    kern::active<T>().softmax_rows(probs->data(), logits.val().data(), N, V);
    int64_t count = 0;
    double loss = 0;
    for (int64_t i = 0; i < N; ++i) {
        int tgt = targets[size_t(i)];
        if (tgt < 0) continue;
        ++count;
        double p = double((*probs)[i * V + tgt]);
        loss -= std::log(p < 1e-30 ? 1e-30 : p);
    }
    Tensor<T> y({1});
    y[0] = count > 0 ? T(loss / double(count)) : T(0);
    int lid = logits.id;
    auto tgts = targets;
    return detail::make_op<T>(tp, std::move(y), {lid}, [=](Tape<T>& t, int self) {
        if (!t.needs_grad(lid) || count == 0) return;
        T s = t.grad(self)[0] / T(count);
        T* gl = t.grad(lid).data();
        const T* pv = probs->data();
        for (int64_t i = 0; i < N; ++i) {
            int tgt = tgts[size_t(i)];
            if (tgt < 0) continue;
            T* row = gl + i * V;
            const T* prow = pv + i * V;
            for (int64_t v = 0; v < V; ++v) row[v] += s * prow[v];
            row[tgt] -= s;
        }
    });
}

// ---- adaln helpers -------------------------------------------------------------

// x (B, L, d) * (1 + scale (B, d)) + shift (B, d), broadcast over L
template <typename T>
Var<T> modulate(Var<T> x, Var<T> shift, Var<T> sc) {
    auto& tp = *x.tape;
    int64_t B = x.dim(0), L = x.dim(1), d = x.dim(2);
    Tensor<T> y(x.shape());
    const T* xv = x.val().data();
    const T* sh = shift.val().data();
    const T* sv = sc.val().data();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t l = 0; l < L; ++l) {
            const T* xp = xv + (b * L + l) * d;
            T* yp = y.data() + (b * L + l) * d;
            const T* shb = sh + b * d;
            const T* svb = sv + b * d;
            for (int64_t c = 0; c < d; ++c) yp[c] = xp[c] * (T(1) + svb[c]) + shb[c];
        }
    int xid = x.id, hid = shift.id, sid = sc.id;
    return detail::make_op<T>(tp, std::move(y), {xid, hid, sid}, [=](Tape<T>& t, int self) {
        const T* gy = t.grad(self).data();
        const T* xv2 = t.value(xid).data();
        const T* sv2 = t.value(sid).data();
        for (int64_t b = 0; b < B; ++b)
            for (int64_t l = 0; l < L; ++l) {
                const T* gp = gy + (b * L + l) * d;
                if (t.needs_grad(xid)) {
                    T* gx = t.grad(xid).data() + (b * L + l) * d;
                    const T* svb = sv2 + b * d;
                    for (int64_t c = 0; c < d; ++c) gx[c] += gp[c] * (T(1) + svb[c]);
                }
                if (t.needs_grad(hid)) {
                    T* gh = t.grad(hid).data() + b * d;
                    for (int64_t c = 0; c < d; ++c) gh[c] += gp[c];
                }
                if (t.needs_grad(sid)) {
                    T* gs = t.grad(sid).data() + b * d;
                    const T* xp = xv2 + (b * L + l) * d;
                    for (int64_t c = 0; c < d; ++c) gs[c] += gp[c] * xp[c];
                }
            }
    });
}

// x + gate (B, d) * h, broadcast over L
template <typename T>
Var<T> gated_add(Var<T> x, Var<T> h, Var<T> gate) {
    auto& tp = *x.tape;
    int64_t B = x.dim(0), L = x.dim(1), d = x.dim(2);
    Tensor<T> y = x.val().clone();
    const T* hv = h.val().data();
    const T* gv = gate.val().data();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t l = 0; l < L; ++l) {
            T* yp = y.data() + (b * L + l) * d;
            const T* hp = hv + (b * L + l) * d;
            const T* gb = gv + b * d;
            for (int64_t c = 0; c < d; ++c) yp[c] += gb[c] * hp[c];
        }
    int xid = x.id, hid = h.id, gid = gate.id;
    return detail::make_op<T>(tp, std::move(y), {xid, hid, gid}, [=](Tape<T>& t, int self) {
        const T* gy = t.grad(self).data();
        if (t.needs_grad(xid)) kern::active<T>().add(t.grad(xid).data(), gy, B * L * d);
        const T* hv2 = t.value(hid).data();
        const T* gv2 = t.value(gid).data();
        for (int64_t b = 0; b < B; ++b)
            for (int64_t l = 0; l < L; ++l) {
                const T* gp = gy + (b * L + l) * d;
                if (t.needs_grad(hid)) {
                    T* gh = t.grad(hid).data() + (b * L + l) * d;
                    const T* gb = gv2 + b * d;
                    for (int64_t c = 0; c < d; ++c) gh[c] += gp[c] * gb[c];
                }
                if (t.needs_grad(gid)) {
                    T* gg = t.grad(gid).data() + b * d;
                    const T* hp = hv2 + (b * L + l) * d;
                    for (int64_t c = 0; c < d; ++c) gg[c] += gp[c] * hp[c];
                }
            }
    });
}

} // namespace umm
