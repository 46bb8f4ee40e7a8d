#pragma once

#include "umm/nn.hpp"

// Pre-norm transformer block shared by the latent encoder, the decoder and
// the flow head. Masking, 3-axis rotary tables and AdaLN-Zero conditioning
// are all optional per call site.

namespace umm {

// rotary tables for a (B, L) batch of 3-axis coordinates. The head dim is
// split into pair groups (Pt : Ph : Pw); table layout matches rope()'s
// consecutive-pair convention.
template <typename T>
struct RopeTables {
    Tensor<T> cos_t, sin_t; // (B, L, head_dim/2)
};

struct RopeSplit {
    int64_t pt = 0, ph = 0, pw = 0; // pair counts per axis

    static RopeSplit for_head_dim(int64_t head_dim) {
        // 2:1:1 over (t:h:w); head_dim must be divisible by 8
        int64_t pairs = head_dim / 2;
        RopeSplit s;
        s.pt = pairs / 2;
        s.ph = pairs / 4;
        s.pw = pairs - s.pt - s.ph;
        return s;
    }
};

template <typename T>
RopeTables<T> make_rope_tables(const std::vector<int64_t>& pos, int64_t B, int64_t L,
                               const RopeSplit& split, double base = 10000.0) {
    int64_t P = split.pt + split.ph + split.pw;
    RopeTables<T> out;
    out.cos_t = Tensor<T>({B, L, P});
    out.sin_t = Tensor<T>({B, L, P});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t l = 0; l < L; ++l) {
            const int64_t* coord = pos.data() + (b * L + l) * 3;
            T* cp = out.cos_t.data() + (b * L + l) * P;
            T* sp = out.sin_t.data() + (b * L + l) * P;
            int64_t off = 0;
            const int64_t counts[3] = {split.pt, split.ph, split.pw};
            for (int axis = 0; axis < 3; ++axis) {
                for (int64_t p = 0; p < counts[axis]; ++p) {
                    double inv = std::pow(base, -double(p) / double(counts[axis]));
                    double ang = double(coord[axis]) * inv;
                    cp[off + p] = T(std::cos(ang));
                    sp[off + p] = T(std::sin(ang));
                }
                off += counts[axis];
            }
        }
    return out;
}

// sinusoidal features of a scalar timestep (frequencies span ~[1, 1e4) on
// t*1000), one row per sample
template <typename T>
Tensor<T> timestep_features(const std::vector<T>& t, int64_t dim) {
    int64_t half = dim / 2;
    Tensor<T> out({int64_t(t.size()), dim});
    for (size_t b = 0; b < t.size(); ++b)
        for (int64_t k = 0; k < half; ++k) {
            double freq = std::exp(-std::log(10000.0) * double(k) / double(half));
            double ang = double(t[b]) * 1000.0 * freq;
            out[int64_t(b) * dim + k] = T(std::cos(ang));
            out[int64_t(b) * dim + half + k] = T(std::sin(ang));
        }
    return out;
}

template <typename T>
struct AttnContext {
    const Tensor<T>* mask = nullptr;      // (B, L, L) additive
    const RopeTables<T>* rope = nullptr;  // optional
};

template <typename T>
struct AttnBlock {
    LayerNormLayer<T> ln1, ln2;
    LinearLayer<T> wq, wk, wv, wo, fc1, fc2;
    LinearLayer<T> ada; // AdaLN-Zero modulation, zero-init; present iff use_adaln
    int64_t heads = 4;
    bool use_adaln = false;

    void init(const std::string& name, Rng& rng, int64_t dim, int64_t n_heads, int64_t mlp_ratio,
              bool adaln) {
        heads = n_heads;
        use_adaln = adaln;
        ln1.init(name + ".ln1", dim);
        ln2.init(name + ".ln2", dim);
        wq.init(name + ".wq", rng, dim, dim);
        wk.init(name + ".wk", rng, dim, dim);
        wv.init(name + ".wv", rng, dim, dim);
        wo.init(name + ".wo", rng, dim, dim);
        fc1.init(name + ".fc1", rng, dim, dim * mlp_ratio);
        fc2.init(name + ".fc2", rng, dim * mlp_ratio, dim);
        if (adaln) ada.init_zero(name + ".ada", dim, 6 * dim);
    }

    void collect(ParamRefs<T>& out) {
        ln1.collect(out);
        ln2.collect(out);
        for (auto* l : {&wq, &wk, &wv, &wo, &fc1, &fc2}) l->collect(out);
        if (use_adaln) ada.collect(out);
    }

    // x (B, L, d); cond (B, d) required iff use_adaln
    Var<T> fwd(Tape<T>& tp, Var<T> x, const AttnContext<T>& ctx, Var<T> cond = {}) {
        int64_t B = x.dim(0), L = x.dim(1), d = x.dim(2);
        int64_t dh = d / heads;

        Var<T> sh1, sc1, g1, sh2, sc2, g2;
        if (use_adaln) {
            Var<T> mods = ada.fwd(tp, cond); // (B, 6d), zero at init
            sh1 = slice_axis(mods, 1, 0, d);
            sc1 = slice_axis(mods, 1, d, d);
            g1 = slice_axis(mods, 1, 2 * d, d);
            sh2 = slice_axis(mods, 1, 3 * d, d);
            sc2 = slice_axis(mods, 1, 4 * d, d);
            g2 = slice_axis(mods, 1, 5 * d, d);
        }

        Var<T> h = ln1.fwd(tp, x);
        if (use_adaln) h = modulate(h, sh1, sc1);

        auto to_heads = [&](Var<T> y) {
            return reshape(transpose12(reshape(y, {B, L, heads, dh})), {B * heads, L, dh});
        };
        Var<T> q = to_heads(wq.fwd(tp, h));
        Var<T> k = to_heads(wk.fwd(tp, h));
        Var<T> v = to_heads(wv.fwd(tp, h));
        if (ctx.rope) {
            auto with_rope = [&](Var<T> y) {
                Var<T> y4 = reshape(y, {B, heads, L, dh});
                return reshape(rope(y4, ctx.rope->cos_t, ctx.rope->sin_t), {B * heads, L, dh});
            };
            q = with_rope(q);
            k = with_rope(k);
        }
        Var<T> scores = bmm_nt(q, k, T(1.0 / std::sqrt(double(dh))));
        if (ctx.mask) scores = add_mask(scores, *ctx.mask, heads);
        Var<T> probs = softmax_last(scores);
        Var<T> ctx_out = bmm_nn(probs, v); // (B*heads, L, dh)
        Var<T> merged = reshape(transpose12(reshape(ctx_out, {B, heads, L, dh})), {B, L, d});
        Var<T> attn_out = wo.fwd(tp, merged);
        x = use_adaln ? gated_add(x, attn_out, g1) : add(x, attn_out);

        Var<T> h2 = ln2.fwd(tp, x);
        if (use_adaln) h2 = modulate(h2, sh2, sc2);
        Var<T> m = fc2.fwd(tp, silu(fc1.fwd(tp, h2)));
        return use_adaln ? gated_add(x, m, g2) : add(x, m);
    }
};

} // namespace umm
