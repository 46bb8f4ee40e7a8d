#pragma once

#include "umm/ops.hpp"

// Convolution ops used by the latent codec. conv2d lowers to im2col + gemm;
// im2col/col2im are memory-bound and stay scalar.

namespace umm {

namespace detail {

template <typename T>
void im2col(const T* x, T* col, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, int64_t OH, int64_t OW) {
    // col layout: (OH*OW, C*kh*kw)
    for (int64_t oy = 0; oy < OH; ++oy)
        for (int64_t ox = 0; ox < OW; ++ox) {
            T* crow = col + (oy * OW + ox) * C * kh * kw;
            for (int64_t c = 0; c < C; ++c)
                for (int64_t dy = 0; dy < kh; ++dy) {
                    int64_t iy = oy * stride - pad + dy;
                    for (int64_t dx = 0; dx < kw; ++dx) {
                        int64_t ix = ox * stride - pad + dx;
                        T v = (iy >= 0 && iy < H && ix >= 0 && ix < W) ? x[(c * H + iy) * W + ix] : T(0);
                        crow[(c * kh + dy) * kw + dx] = v;
                    }
                }
        }
}

template <typename T>
void col2im_acc(const T* col, T* x, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
                int64_t stride, int64_t pad, int64_t OH, int64_t OW) {
    for (int64_t oy = 0; oy < OH; ++oy)
        for (int64_t ox = 0; ox < OW; ++ox) {
            const T* crow = col + (oy * OW + ox) * C * kh * kw;
            for (int64_t c = 0; c < C; ++c)
                for (int64_t dy = 0; dy < kh; ++dy) {
                    int64_t iy = oy * stride - pad + dy;
                    if (iy < 0 || iy >= H) continue;
                    for (int64_t dx = 0; dx < kw; ++dx) {
                        int64_t ix = ox * stride - pad + dx;
                        if (ix < 0 || ix >= W) continue;
                        x[(c * H + iy) * W + ix] += crow[(c * kh + dy) * kw + dx];
                    }
                }
        }
}

} // namespace detail

// x (B, C, H, W), w (Co, C, kh, kw), b (Co) -> (B, Co, OH, OW)
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, int64_t stride, int64_t pad) {
    auto& tp = *x.tape;
    int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    int64_t Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    int64_t OH = (H + 2 * pad - kh) / stride + 1;
    int64_t OW = (W + 2 * pad - kw) / stride + 1;
    int64_t CK = C * kh * kw, P = OH * OW;

    auto col = std::make_shared<Tensor<T>>(Shape{B, P, CK});
    Tensor<T> y({B, Co, OH, OW});
    const auto& kk = kern::active<T>();
    for (int64_t bi = 0; bi < B; ++bi) {
        T* colb = col->data() + bi * P * CK;
        detail::im2col(x.val().data() + bi * C * H * W, colb, C, H, W, kh, kw, stride, pad, OH, OW);
        // y_b (Co, P) = w (Co, CK) . col_b^T
        kk.gemm_nt(Co, P, CK, T(1), w.val().data(), colb, T(0), y.data() + bi * Co * P);
    }
    const T* bv = b.val().data();
    for (int64_t bi = 0; bi < B; ++bi)
        for (int64_t co = 0; co < Co; ++co) {
            T* row = y.data() + (bi * Co + co) * P;
            T add = bv[co];
            for (int64_t p = 0; p < P; ++p) row[p] += add;
        }

    int xid = x.id, wid = w.id, bid = b.id;
    return detail::make_op<T>(tp, std::move(y), {xid, wid, bid}, [=](Tape<T>& t, int self) {
        const auto& k2 = kern::active<T>();
        const T* gy = t.grad(self).data();
        if (t.needs_grad(bid)) {
            T* gb = t.grad(bid).data();
            for (int64_t bi = 0; bi < B; ++bi)
                for (int64_t co = 0; co < Co; ++co)
                    gb[co] += k2.reduce_sum(gy + (bi * Co + co) * P, P);
        }
        Tensor<T> dcol({P, CK});
        for (int64_t bi = 0; bi < B; ++bi) {
            const T* gyb = gy + bi * Co * P;
            const T* colb = col->data() + bi * P * CK;
            if (t.needs_grad(wid))
                k2.gemm_nn(Co, CK, P, T(1), gyb, colb, T(1), t.grad(wid).data());
            if (t.needs_grad(xid)) {
                k2.gemm_tn(P, CK, Co, T(1), gyb, t.value(wid).data(), T(0), dcol.data());
                detail::col2im_acc(dcol.data(), t.grad(xid).data() + bi * C * H * W, C, H, W, kh, kw,
                                   stride, pad, OH, OW);
            }
        }
    });
}

template <typename T>
Var<T> upsample2x(Var<T> x) {
    auto& tp = *x.tape;
    int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<T> y({B, C, 2 * H, 2 * W});
    const T* xv = x.val().data();
    for (int64_t bc = 0; bc < B * C; ++bc)
        for (int64_t i = 0; i < H; ++i)
            for (int64_t j = 0; j < W; ++j) {
                T v = xv[(bc * H + i) * W + j];
                T* yp = y.data() + bc * 4 * H * W + 2 * i * 2 * W + 2 * j;
                yp[0] = v;
                yp[1] = v;
                yp[2 * W] = v;
                yp[2 * W + 1] = v;
            }
    int xid = x.id;
    return detail::make_op<T>(tp, std::move(y), {xid}, [=](Tape<T>& t, int self) {
        if (!t.needs_grad(xid)) return;
        const T* gy = t.grad(self).data();
        T* gx = t.grad(xid).data();
        for (int64_t bc = 0; bc < B * C; ++bc)
            for (int64_t i = 0; i < H; ++i)
                for (int64_t j = 0; j < W; ++j) {
                    const T* gp = gy + bc * 4 * H * W + 2 * i * 2 * W + 2 * j;
                    gx[(bc * H + i) * W + j] += gp[0] + gp[1] + gp[2 * W] + gp[2 * W + 1];
                }
    });
}

// layernorm over the channel axis of (B, C, S) feature maps, affine per channel
template <typename T>
Var<T> channel_layernorm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5)) {
    auto& tp = *x.tape;
    int64_t B = x.dim(0), C = x.dim(1), S = x.val().numel() / (B * x.dim(1));
    Tensor<T> y(x.shape());
    auto mean = std::make_shared<Tensor<T>>(Shape{B, S});
    auto rstd = std::make_shared<Tensor<T>>(Shape{B, S});
    const T* xv = x.val().data();
    const T* gm = gamma.val().data();
    const T* bt = beta.val().data();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t s = 0; s < S; ++s) {
            const T* xp = xv + b * C * S + s;
            T mu = 0;
            for (int64_t c = 0; c < C; ++c) mu += xp[c * S];
            mu /= T(C);
            T var = 0;
            for (int64_t c = 0; c < C; ++c) {
                T d = xp[c * S] - mu;
                var += d * d;
            }
            var /= T(C);
            T rs = T(1) / T(std::sqrt(double(var + eps)));
            (*mean)[b * S + s] = mu;
            (*rstd)[b * S + s] = rs;
            T* yp = y.data() + b * C * S + s;
            for (int64_t c = 0; c < C; ++c) yp[c * S] = (xp[c * S] - mu) * rs * gm[c] + bt[c];
        }
    int xid = x.id, gid = gamma.id, bid = beta.id;
    return detail::make_op<T>(tp, std::move(y), {xid, gid, bid}, [=](Tape<T>& t, int self) {
        const T* gy = t.grad(self).data();
        const T* xv2 = t.value(xid).data();
        const T* gm2 = t.value(gid).data();
        bool needx = t.needs_grad(xid), needg = t.needs_grad(gid), needb = t.needs_grad(bid);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t s = 0; s < S; ++s) {
                const T* xp = xv2 + b * C * S + s;
                const T* gp = gy + b * C * S + s;
                T mu = (*mean)[b * S + s], rs = (*rstd)[b * S + s];
                T sum_g = 0, sum_gx = 0;
                for (int64_t c = 0; c < C; ++c) {
                    T xhat = (xp[c * S] - mu) * rs;
                    T g = gp[c * S] * gm2[c];
                    sum_g += g;
                    sum_gx += g * xhat;
                }
                T invC = T(1) / T(C);
                for (int64_t c = 0; c < C; ++c) {
                    T xhat = (xp[c * S] - mu) * rs;
                    if (needx) {
                        T g = gp[c * S] * gm2[c];
                        t.grad(xid).data()[b * C * S + c * S + s] +=
                            rs * (g - invC * (sum_g + xhat * sum_gx));
                    }
                    if (needg) t.grad(gid).data()[c] += gp[c * S] * xhat;
                    if (needb) t.grad(bid).data()[c] += gp[c * S];
                }
            }
    });
}

} // namespace umm
