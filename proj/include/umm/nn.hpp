#pragma once

#include "umm/ops.hpp"
#include "umm/ops_conv.hpp"

// Small layer wrappers: parameter ownership + a tape-forward method.

namespace umm {

template <typename T>
void ensure_finite(const Tensor<T>& t, const std::string& where) {
    const T* p = t.data();
    for (int64_t i = 0, n = t.numel(); i < n; ++i)
        if (!std::isfinite(double(p[i])))
            throw std::runtime_error("non-finite activation in " + where + " at index " +
                                     std::to_string(i));
}

template <typename T>
struct LinearLayer {
    Param<T> w, b;

    void init(const std::string& name, Rng& rng, int64_t in, int64_t out, T w_std = T(0.02)) {
        w.init(name + ".w", Tensor<T>::randn({in, out}, rng, w_std));
        b.init(name + ".b", Tensor<T>::zeros({out}));
    }

    void init_zero(const std::string& name, int64_t in, int64_t out) {
        w.init(name + ".w", Tensor<T>::zeros({in, out}));
        b.init(name + ".b", Tensor<T>::zeros({out}));
    }

    Var<T> fwd(Tape<T>& tp, Var<T> x) { return linear(x, use_param(tp, w), use_param(tp, b)); }

    void collect(ParamRefs<T>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }
};

template <typename T>
struct LayerNormLayer {
    Param<T> g, b;

    void init(const std::string& name, int64_t dim) {
        g.init(name + ".g", Tensor<T>::full({dim}, T(1)));
        b.init(name + ".b", Tensor<T>::zeros({dim}));
    }

    Var<T> fwd(Tape<T>& tp, Var<T> x) { return layernorm(x, use_param(tp, g), use_param(tp, b)); }

    void collect(ParamRefs<T>& out) {
        out.push_back(&g);
        out.push_back(&b);
    }
};

template <typename T>
struct Conv2dLayer {
    Param<T> w, b;
    int64_t stride = 1, pad = 1;

    void init(const std::string& name, Rng& rng, int64_t cin, int64_t cout, int64_t k, int64_t stride_,
              int64_t pad_) {
        // He init for conv stacks with silu
        T std = T(std::sqrt(2.0 / double(cin * k * k)));
        w.init(name + ".w", Tensor<T>::randn({cout, cin, k, k}, rng, std));
        b.init(name + ".b", Tensor<T>::zeros({cout}));
        stride = stride_;
        pad = pad_;
    }

    Var<T> fwd(Tape<T>& tp, Var<T> x) {
        return conv2d(x, use_param(tp, w), use_param(tp, b), stride, pad);
    }

    void collect(ParamRefs<T>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }
};

template <typename T>
struct ChannelNormLayer {
    Param<T> g, b;

    void init(const std::string& name, int64_t ch) {
        g.init(name + ".g", Tensor<T>::full({ch}, T(1)));
        b.init(name + ".b", Tensor<T>::zeros({ch}));
    }

    // x (B, C, H, W) or any (B, C, spatial...) layout
    Var<T> fwd(Tape<T>& tp, Var<T> x) {
        Shape orig = x.shape();
        int64_t B = orig[0], C = orig[1];
        Var<T> flat = reshape(x, {B, C, x.val().numel() / (B * C)});
        Var<T> y = channel_layernorm(flat, use_param(tp, g), use_param(tp, b));
        return reshape(y, orig);
    }

    void collect(ParamRefs<T>& out) {
        out.push_back(&g);
        out.push_back(&b);
    }
};

// decoupled weight decay Adam over a parameter set; skips frozen params
template <typename T>
struct AdamW {
    T beta1 = T(0.9), beta2 = T(0.999), eps = T(1e-8), weight_decay = T(0.01);
    int64_t step = 0;

    void zero_grads(const ParamRefs<T>& params) {
        for (auto* p : params) p->grad.zero_();
    }

    // global grad-norm over trainable params
    T grad_norm(const ParamRefs<T>& params) {
        double acc = 0;
        for (auto* p : params) {
            if (!p->trainable) continue;
            acc += double(kern::active<T>().reduce_sumsq(p->grad.data(), p->grad.numel()));
        }
        return T(std::sqrt(acc));
    }

    void clip_grads(const ParamRefs<T>& params, T max_norm, T norm) {
        if (norm <= max_norm || norm <= T(0)) return;
        T s = max_norm / norm;
        for (auto* p : params) {
            if (!p->trainable) continue;
            kern::active<T>().scale(p->grad.data(), s, p->grad.numel());
        }
    }

    void update(const ParamRefs<T>& params, T lr) {
        ++step;
        const auto& kk = kern::active<T>();
        for (auto* p : params) {
            if (!p->trainable) continue;
            kk.adamw(p->value.data(), p->grad.data(), p->adam_m.data(), p->adam_v.data(),
                     p->value.numel(), lr, beta1, beta2, eps, weight_decay, step);
        }
    }
};

} // namespace umm
