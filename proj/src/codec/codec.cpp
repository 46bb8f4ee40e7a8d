#include "umm/codec.hpp"

namespace umm {

namespace {

bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

// (B, 3, T, H, W) -> (B*G, 12, H, W); group 0 is frame 0 repeated, group g>=1
// stacks frames 4g-3..4g frame-major
template <typename T>
Tensor<T> build_groups(const Tensor<T>& x, int temporal_factor) {
    int64_t B = x.dim(0), C = x.dim(1), Tn = x.dim(2), H = x.dim(3), W = x.dim(4);
    int64_t G = 1 + (Tn - 1) / temporal_factor;
    int64_t HW = H * W;
    Tensor<T> out({B * G, C * temporal_factor, H, W});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t g = 0; g < G; ++g)
            for (int64_t fr = 0; fr < temporal_factor; ++fr) {
                int64_t t = g == 0 ? 0 : (g - 1) * temporal_factor + 1 + fr;
                for (int64_t c = 0; c < C; ++c) {
                    const T* src = x.data() + ((b * C + c) * Tn + t) * HW;
                    T* dst = out.data() + ((b * G + g) * C * temporal_factor + fr * C + c) * HW;
                    std::memcpy(dst, src, size_t(HW) * sizeof(T));
                }
            }
    return out;
}

} // namespace

void CodecConfig::validate() const {
    if (!power_of_two(spatial_factor) || !power_of_two(temporal_factor))
        throw std::runtime_error("codec config: compression factors must be powers of two");
    if (kl_weight <= 0) throw std::runtime_error("codec config: kl_weight must be > 0");
    if (latent_channels <= 0) throw std::runtime_error("codec config: latent_channels must be > 0");
}

Shape codec_latent_shape(const Shape& input_shape, const CodecConfig& cfg) {
    if (input_shape.size() != 4)
        throw std::runtime_error("latent_shape: expected (3, T, H, W)");
    int64_t T = input_shape[1], H = input_shape[2], W = input_shape[3];
    if (H % cfg.spatial_factor != 0 || W % cfg.spatial_factor != 0)
        throw std::runtime_error("latent_shape: spatial size not divisible by " +
                                 std::to_string(cfg.spatial_factor));
    if (T % cfg.temporal_factor != 1)
        throw std::runtime_error("latent_shape: frames must be 1 mod " +
                                 std::to_string(cfg.temporal_factor));
    return {cfg.latent_channels, 1 + (T - 1) / cfg.temporal_factor, H / cfg.spatial_factor,
            W / cfg.spatial_factor};
}

template <typename T>
void Codec<T>::init(Rng& rng) {
    cfg.validate();
    const int64_t cin = 3 * cfg.temporal_factor;
    e0.init("codec.enc.c0", rng, cin, 24, 3, 2, 1);
    e1.init("codec.enc.c1", rng, 24, 48, 3, 2, 1);
    e2.init("codec.enc.c2", rng, 48, 64, 3, 2, 1);
    e3.init("codec.enc.c3", rng, 64, 96, 3, 2, 1);
    en1.init("codec.enc.n1", 48);
    en2.init("codec.enc.n2", 64);
    en3.init("codec.enc.n3", 96);
    et_cur.init("codec.enc.t_cur", rng, 96, 96, 1, 1, 0);
    et_prev.init("codec.enc.t_prev", rng, 96, 96, 1, 1, 0);
    e_head.init("codec.enc.head", rng, 96, 2 * cfg.latent_channels, 1, 1, 0);

    d_in.init("codec.dec.in", rng, cfg.latent_channels, 96, 1, 1, 0);
    dt_cur.init("codec.dec.t_cur", rng, 96, 96, 1, 1, 0);
    dt_prev.init("codec.dec.t_prev", rng, 96, 96, 1, 1, 0);
    d0.init("codec.dec.c0", rng, 96, 96, 3, 1, 1);
    d1.init("codec.dec.c1", rng, 96, 64, 3, 1, 1);
    d2.init("codec.dec.c2", rng, 64, 48, 3, 1, 1);
    d3.init("codec.dec.c3", rng, 48, 32, 3, 1, 1);
    d4.init("codec.dec.c4", rng, 32, 16, 3, 1, 1);
    d_out.init("codec.dec.out", rng, 16, cin, 3, 1, 1);
    dn0.init("codec.dec.n0", 96);
    dn1.init("codec.dec.n1", 64);
    dn2.init("codec.dec.n2", 48);
    dn3.init("codec.dec.n3", 32);
}

template <typename T>
void Codec<T>::collect_params(ParamRefs<T>& out) {
    for (auto* l : {&e0, &e1, &e2, &e3, &et_cur, &et_prev, &e_head, &d_in, &dt_cur, &dt_prev, &d0,
                    &d1, &d2, &d3, &d4, &d_out})
        l->collect(out);
    for (auto* n : {&en1, &en2, &en3, &dn0, &dn1, &dn2, &dn3}) n->collect(out);
}

namespace {

// y[g] = silu(cur(y[g]) + prev(y[g-1])), zeros before group 0
template <typename T>
Var<T> temporal_causal_mix(Tape<T>& tp, Var<T> x, int64_t B, int64_t G, Conv2dLayer<T>& cur_conv,
                           Conv2dLayer<T>& prev_conv) {
    int64_t C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Var<T> cur = cur_conv.fwd(tp, x);
    Var<T> grouped = reshape(x, {B, G, C * H * W});
    Var<T> zero = constant(tp, Tensor<T>::zeros({B, 1, C * H * W}));
    Var<T> prev_seq = G > 1
        ? concat_axis<T>({zero, slice_axis(grouped, 1, 0, G - 1)}, 1)
        : zero;
    Var<T> prev = prev_conv.fwd(tp, reshape(prev_seq, {B * G, C, H, W}));
    return silu(add(cur, prev));
}

} // namespace

template <typename T>
std::pair<Var<T>, Var<T>> Codec<T>::encode(Tape<T>& tp, const Tensor<T>& x) const {
    auto& self = *const_cast<Codec<T>*>(this);
    int64_t B = x.dim(0), Tn = x.dim(2), H = x.dim(3), W = x.dim(4);
    (void)codec_latent_shape({x.dim(1), Tn, H, W}, cfg); // validates divisibility
    int64_t G = 1 + (Tn - 1) / cfg.temporal_factor;

    Var<T> h = constant(tp, build_groups(x, cfg.temporal_factor));
    h = silu(self.e0.fwd(tp, h));
    h = silu(self.en1.fwd(tp, self.e1.fwd(tp, h)));
    h = silu(self.en2.fwd(tp, self.e2.fwd(tp, h)));
    h = silu(self.en3.fwd(tp, self.e3.fwd(tp, h)));
    ensure_finite(h.val(), "codec.enc.c3");
    h = temporal_causal_mix(tp, h, B, G, self.et_cur, self.et_prev);
    Var<T> heads = self.e_head.fwd(tp, h); // (B*G, 2zc, h, w)
    ensure_finite(heads.val(), "codec.enc.head");

    int64_t zc = cfg.latent_channels, lh = heads.dim(2), lw = heads.dim(3);
    // (B*G, 2zc, h, w) -> (B, 2zc, G, h, w)
    Var<T> r = reshape(heads, {B, G, 2 * zc, lh * lw});
    r = transpose12(r);
    r = reshape(r, {B, 2 * zc, G, lh, lw});
    Var<T> mean = slice_axis(r, 1, 0, zc);
    Var<T> logvar = slice_axis(r, 1, zc, zc);
    return {mean, logvar};
}

template <typename T>
Var<T> Codec<T>::sample_latent(Tape<T>& tp, Var<T> mean, Var<T> logvar, Rng* rng) const {
    if (!rng) return mean;
    Tensor<T> eps = Tensor<T>::randn(mean.shape(), *rng);
    return add(mean, mul(exp_op(affine(logvar, T(0.5), T(0))), constant(tp, std::move(eps))));
}

template <typename T>
Var<T> Codec<T>::decode(Tape<T>& tp, Var<T> z) const {
    auto& self = *const_cast<Codec<T>*>(this);
    int64_t B = z.dim(0), zc = z.dim(1), G = z.dim(2), lh = z.dim(3), lw = z.dim(4);
    if (zc != cfg.latent_channels) throw std::runtime_error("decode: latent channel mismatch");

    // (B, zc, G, h, w) -> (B*G, zc, h, w)
    Var<T> h = reshape(z, {B, zc, G, lh * lw});
    h = transpose12(h);
    h = reshape(h, {B * G, zc, lh, lw});

    h = silu(self.d_in.fwd(tp, h));
    h = temporal_causal_mix(tp, h, B, G, self.dt_cur, self.dt_prev);
    h = silu(self.dn0.fwd(tp, self.d0.fwd(tp, h)));
    h = upsample2x(h);
    h = silu(self.dn1.fwd(tp, self.d1.fwd(tp, h)));
    h = upsample2x(h);
    h = silu(self.dn2.fwd(tp, self.d2.fwd(tp, h)));
    h = upsample2x(h);
    h = silu(self.dn3.fwd(tp, self.d3.fwd(tp, h)));
    h = upsample2x(h);
    h = silu(self.d4.fwd(tp, h));
    Var<T> y = self.d_out.fwd(tp, h); // (B*G, 12, H, W)
    ensure_finite(y.val(), "codec.dec.out");

    int64_t H = y.dim(2), W = y.dim(3);
    int64_t Tn = 1 + (G - 1) * cfg.temporal_factor;
    // reassemble frames: group 0 channels 0..2 -> frame 0; group g frame fr ->
    // channels fr*3..fr*3+2
    Var<T> grouped = reshape(y, {B, G, 12 * H * W});
    std::vector<Var<T>> frames;
    for (int64_t t = 0; t < Tn; ++t) {
        int64_t g = t == 0 ? 0 : (t - 1) / cfg.temporal_factor + 1;
        int64_t fr = t == 0 ? 0 : (t - 1) % cfg.temporal_factor;
        Var<T> grp = reshape(slice_axis(grouped, 1, g, 1), {B, 12, H * W});
        Var<T> frame = slice_axis(grp, 1, fr * 3, 3); // (B, 3, H*W)
        frames.push_back(reshape(frame, {B, 3, 1, H * W}));
    }
    Var<T> out = frames.size() == 1 ? frames[0] : concat_axis(frames, 2);
    return reshape(out, {B, 3, Tn, H, W});
}

template <typename T>
Var<T> codec_loss(Tape<T>& tp, Var<T> x, Var<T> recon, Var<T> mean, Var<T> logvar, T kl_weight) {
    Var<T> rec = mse(recon, x);
    // mean over elements of 0.5*(mu^2 + e^lv - 1 - lv)
    Var<T> inner = sub(add(mul(mean, mean), exp_op(logvar)), logvar);
    Var<T> kl = affine(mean_all(inner), T(0.5), T(-0.5));
    (void)tp;
    return add(rec, scale(kl, kl_weight));
}

template <typename T>
Var<T> Codec<T>::loss(Tape<T>& tp, const Tensor<T>& x, Var<T> recon, Var<T> mean,
                      Var<T> logvar) const {
    Var<T> xv = constant(tp, x);
    return codec_loss(tp, xv, recon, mean, logvar, T(cfg.kl_weight));
}

template <typename T>
Tensor<T> Codec<T>::encode_mean(const Tensor<T>& x) const {
    Tape<T> tp;
    tp.grad_enabled = false;
    auto [mean, logvar] = encode(tp, x);
    (void)logvar;
    return mean.val().clone();
}

template <typename T>
Tensor<T> Codec<T>::decode_pixels(const Tensor<T>& z) const {
    Tape<T> tp;
    tp.grad_enabled = false;
    Var<T> y = decode(tp, constant(tp, z));
    Tensor<T> out = y.val().clone();
    T* p = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) p[i] = std::min(T(1), std::max(T(-1), p[i]));
    return out;
}

template <typename T>
Tensor<T> standardize_latent(const Tensor<T>& z, const LatentNorm& norm) {
    if (!norm.ready()) return z.clone();
    Tensor<T> out = z.clone();
    int64_t B = z.dim(0), C = z.dim(1), S = z.numel() / (B * C);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            T mu = T(norm.mean[size_t(c)]), sd = T(norm.std[size_t(c)]);
            T* p = out.data() + (b * C + c) * S;
            for (int64_t i = 0; i < S; ++i) p[i] = (p[i] - mu) / sd;
        }
    return out;
}

template <typename T>
Tensor<T> unstandardize_latent(const Tensor<T>& z, const LatentNorm& norm) {
    if (!norm.ready()) return z.clone();
    Tensor<T> out = z.clone();
    int64_t B = z.dim(0), C = z.dim(1), S = z.numel() / (B * C);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            T mu = T(norm.mean[size_t(c)]), sd = T(norm.std[size_t(c)]);
            T* p = out.data() + (b * C + c) * S;
            for (int64_t i = 0; i < S; ++i) p[i] = p[i] * sd + mu;
        }
    return out;
}

template struct Codec<float>;
template struct Codec<double>;
template Var<float> codec_loss(Tape<float>&, Var<float>, Var<float>, Var<float>, Var<float>, float);
template Var<double> codec_loss(Tape<double>&, Var<double>, Var<double>, Var<double>, Var<double>,
                                double);
template Tensor<float> standardize_latent(const Tensor<float>&, const LatentNorm&);
template Tensor<float> unstandardize_latent(const Tensor<float>&, const LatentNorm&);
template Tensor<double> standardize_latent(const Tensor<double>&, const LatentNorm&);
template Tensor<double> unstandardize_latent(const Tensor<double>&, const LatentNorm&);

} // namespace umm
