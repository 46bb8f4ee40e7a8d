#include "umm/repr.hpp"

namespace umm {

ReprVariant repr_variant_from_name(const std::string& name) {
    if (name == "unified") return ReprVariant::unified;
    if (name == "late_fusion") return ReprVariant::late_fusion;
    if (name == "decoupled") return ReprVariant::decoupled;
    throw std::runtime_error("unknown representation variant '" + name + "'");
}

const char* repr_variant_name(ReprVariant v) {
    switch (v) {
        case ReprVariant::unified: return "unified";
        case ReprVariant::late_fusion: return "late_fusion";
        case ReprVariant::decoupled: return "decoupled";
    }
    return "?";
}

template <typename T>
NoisedLatent<T> noise_latent(const Tensor<T>& x1, const std::vector<T>& t, Rng& rng) {
    int64_t B = x1.dim(0);
    if (int64_t(t.size()) != B) throw std::runtime_error("noise_latent: one t per sample");
    for (T ti : t)
        if (ti < T(0) || ti > T(1))
            throw std::runtime_error("noise_latent: t outside [0,1]");
    NoisedLatent<T> out;
    out.x0 = Tensor<T>::randn(x1.shape, rng);
    out.x_t = Tensor<T>(x1.shape);
    out.t = t;
    int64_t per = x1.numel() / B;
    for (int64_t b = 0; b < B; ++b) {
        T tb = t[size_t(b)];
        const T* p1 = x1.data() + b * per;
        const T* p0 = out.x0.data() + b * per;
        T* pt = out.x_t.data() + b * per;
        for (int64_t i = 0; i < per; ++i) pt[i] = tb * p1[i] + (T(1) - tb) * p0[i];
    }
    return out;
}

template <typename T>
void ReprBuilder<T>::init(Rng& rng) {
    int64_t hw = cfg.grid * cfg.grid;
    switch (cfg.variant) {
        case ReprVariant::unified:
            patch_embed.init("repr.patch_embed", rng, cfg.latent_channels, cfg.enc_dim);
            pos_emb.init("repr.pos_emb", Tensor<T>::randn({hw, cfg.enc_dim}, rng, T(0.02)));
            blocks.resize(size_t(cfg.enc_layers));
            for (int64_t i = 0; i < cfg.enc_layers; ++i)
                blocks[size_t(i)].init("repr.block" + std::to_string(i), rng, cfg.enc_dim, cfg.heads,
                                       cfg.mlp_ratio, false);
            enc_ln.init("repr.enc_ln", cfg.enc_dim);
            break;
        case ReprVariant::late_fusion: {
            sem_embed.init("repr.sem_embed", rng, cfg.latent_channels, cfg.enc_dim);
            sem_pos.init("repr.sem_pos", Tensor<T>::randn({hw, cfg.enc_dim}, rng, T(0.02)));
            int64_t sem_layers = std::max<int64_t>(1, cfg.enc_layers / 2);
            sem_blocks.resize(size_t(sem_layers));
            for (int64_t i = 0; i < sem_layers; ++i)
                sem_blocks[size_t(i)].init("repr.sem_block" + std::to_string(i), rng, cfg.enc_dim,
                                           cfg.heads, cfg.mlp_ratio, false);
            sem_ln.init("repr.sem_ln", cfg.enc_dim);
            vae_proj.init("repr.vae_proj", rng, cfg.latent_channels, cfg.enc_dim);
            fusion.init("repr.fusion", rng, 2 * cfg.enc_dim, cfg.enc_dim);
            break;
        }
        case ReprVariant::decoupled: {
            int64_t pdim = 3 * cfg.pixel_patch * cfg.pixel_patch;
            pix_embed.init("repr.pix_embed", rng, pdim, cfg.enc_dim);
            pix_pos.init("repr.pix_pos", Tensor<T>::randn({hw, cfg.enc_dim}, rng, T(0.02)));
            pix_blocks.resize(size_t(cfg.enc_layers));
            for (int64_t i = 0; i < cfg.enc_layers; ++i)
                pix_blocks[size_t(i)].init("repr.pix_block" + std::to_string(i), rng, cfg.enc_dim,
                                           cfg.heads, cfg.mlp_ratio, false);
            pix_ln.init("repr.pix_ln", cfg.enc_dim);
            pix_conn1.init("repr.pix_conn1", rng, cfg.enc_dim, 2 * cfg.enc_dim);
            pix_conn2.init("repr.pix_conn2", rng, 2 * cfg.enc_dim, cfg.model_dim);
            gen_embed.init("repr.gen_embed", rng, cfg.latent_channels, cfg.model_dim);
            break;
        }
    }
    if (cfg.variant != ReprVariant::decoupled) {
        conn1.init("connector.fc1", rng, cfg.enc_dim, 2 * cfg.enc_dim);
        conn2.init("connector.fc2", rng, 2 * cfg.enc_dim, cfg.model_dim);
    }
}

template <typename T>
void ReprBuilder<T>::collect_params(ParamRefs<T>& out) {
    switch (cfg.variant) {
        case ReprVariant::unified:
            patch_embed.collect(out);
            out.push_back(&pos_emb);
            for (auto& b : blocks) b.collect(out);
            enc_ln.collect(out);
            break;
        case ReprVariant::late_fusion:
            sem_embed.collect(out);
            out.push_back(&sem_pos);
            for (auto& b : sem_blocks) b.collect(out);
            sem_ln.collect(out);
            vae_proj.collect(out);
            fusion.collect(out);
            break;
        case ReprVariant::decoupled:
            pix_embed.collect(out);
            out.push_back(&pix_pos);
            for (auto& b : pix_blocks) b.collect(out);
            pix_ln.collect(out);
            pix_conn1.collect(out);
            pix_conn2.collect(out);
            gen_embed.collect(out);
            break;
    }
    if (cfg.variant != ReprVariant::decoupled) {
        conn1.collect(out);
        conn2.collect(out);
    }
}

template <typename T>
void ReprBuilder<T>::collect_params_for_task(TaskMode task, ParamRefs<T>& out) {
    if (cfg.variant != ReprVariant::decoupled) {
        collect_params(out);
        return;
    }
    if (task == TaskMode::understanding) {
        pix_embed.collect(out);
        out.push_back(&pix_pos);
        for (auto& b : pix_blocks) b.collect(out);
        pix_ln.collect(out);
        pix_conn1.collect(out);
        pix_conn2.collect(out);
    } else {
        gen_embed.collect(out);
    }
}

namespace {

// (B, c, f, h, w) -> (B*f, hw, c)
template <typename T>
Var<T> fold_frames(Tape<T>& tp, Var<T> x) {
    (void)tp;
    int64_t B = x.dim(0), c = x.dim(1), f = x.dim(2), hw = x.dim(3) * x.dim(4);
    Var<T> r = reshape(x, {B, c, f, hw});
    r = transpose12(r);                      // (B, f, c, hw)
    r = reshape(r, {B * f, c, hw, 1});
    r = transpose12(r);                      // (B*f, hw, c, 1)
    return reshape(r, {B * f, hw, c});
}

} // namespace

template <typename T>
Var<T> ReprBuilder<T>::embed_latent(Tape<T>& tp, Var<T> x_t) {
    if (x_t.dim(1) != cfg.latent_channels)
        throw std::runtime_error("embed_latent: latent channel mismatch");
    Var<T> tok = fold_frames(tp, x_t);
    tok = patch_embed.fwd(tp, tok); // per-position linear: 1x1 patch embedding
    int64_t rows = tok.dim(0), hw = tok.dim(1);
    if (hw != cfg.grid * cfg.grid)
        throw std::runtime_error("embed_latent: grid mismatch");
    Var<T> flat = reshape(tok, {rows, hw * cfg.enc_dim});
    Var<T> pos = reshape(use_param(tp, pos_emb), {hw * cfg.enc_dim});
    return reshape(bias_add(flat, pos), {rows, hw, cfg.enc_dim});
}

template <typename T>
Var<T> ReprBuilder<T>::encode_repr(Tape<T>& tp, Var<T> tokens, std::vector<Var<T>>* per_layer) {
    AttnContext<T> ctx; // no mask, no rope: full bidirectional attention per frame
    Var<T> x = tokens;
    for (auto& b : blocks) {
        x = b.fwd(tp, x, ctx);
        if (per_layer) per_layer->push_back(x);
    }
    ensure_finite(x.val(), "repr.blocks");
    return enc_ln.fwd(tp, x);
}

template <typename T>
Var<T> ReprBuilder<T>::connect(Tape<T>& tp, Var<T> feats, int64_t batch) {
    Var<T> y = conn2.fwd(tp, gelu(conn1.fwd(tp, feats)));
    int64_t rows = y.dim(0), hw = y.dim(1);
    return reshape(y, {batch, (rows / batch) * hw, cfg.model_dim});
}

template <typename T>
Var<T> ReprBuilder<T>::unified_features(Tape<T>& tp, const Tensor<T>& x_t) {
    Var<T> xv = constant(tp, x_t);
    return encode_repr(tp, embed_latent(tp, xv));
}

template <typename T>
Var<T> ReprBuilder<T>::semantic_features(Tape<T>& tp, const Tensor<T>& x_t) {
    Var<T> xv = constant(tp, x_t);
    Var<T> tok = fold_frames(tp, xv);
    tok = sem_embed.fwd(tp, tok);
    int64_t rows = tok.dim(0), hw = tok.dim(1);
    Var<T> flat = reshape(tok, {rows, hw * cfg.enc_dim});
    Var<T> pos = reshape(use_param(tp, sem_pos), {hw * cfg.enc_dim});
    Var<T> x = reshape(bias_add(flat, pos), {rows, hw, cfg.enc_dim});
    AttnContext<T> ctx;
    for (auto& b : sem_blocks) x = b.fwd(tp, x, ctx);
    return sem_ln.fwd(tp, x);
}

template <typename T>
typename ReprBuilder<T>::Branches ReprBuilder<T>::late_fusion_branches(Tape<T>& tp,
                                                                       const Tensor<T>& x_t) {
    Branches br;
    br.semantic = semantic_features(tp, x_t);
    Var<T> xv = constant(tp, x_t);
    br.latent = vae_proj.fwd(tp, fold_frames(tp, xv));
    Var<T> cat = concat_axis<T>({br.semantic, br.latent}, 2);
    br.fused = fusion.fwd(tp, cat);
    return br;
}

template <typename T>
Var<T> ReprBuilder<T>::build(Tape<T>& tp, const Tensor<T>& x_t, TaskMode task,
                             const Tensor<T>* raw_pixels) {
    int64_t B = x_t.dim(0);
    switch (cfg.variant) {
        case ReprVariant::unified: {
            Var<T> xv = constant(tp, x_t);
            Var<T> feats = encode_repr(tp, embed_latent(tp, xv));
            return connect(tp, feats, B);
        }
        case ReprVariant::late_fusion: {
            Branches br = late_fusion_branches(tp, x_t);
            return connect(tp, br.fused, B);
        }
        case ReprVariant::decoupled: {
            if (task == TaskMode::understanding) {
                if (!raw_pixels)
                    throw std::runtime_error("decoupled understanding path needs raw pixels");
                Tensor<T> patches = patchify_pixels(*raw_pixels, cfg.pixel_patch, 4);
                Var<T> tok = pix_embed.fwd(tp, constant(tp, patches));
                int64_t rows = tok.dim(0), hw = tok.dim(1);
                Var<T> flat = reshape(tok, {rows, hw * cfg.enc_dim});
                Var<T> pos = reshape(use_param(tp, pix_pos), {hw * cfg.enc_dim});
                Var<T> x = reshape(bias_add(flat, pos), {rows, hw, cfg.enc_dim});
                AttnContext<T> ctx;
                for (auto& b : pix_blocks) x = b.fwd(tp, x, ctx);
                x = pix_ln.fwd(tp, x);
                Var<T> y = pix_conn2.fwd(tp, gelu(pix_conn1.fwd(tp, x)));
                return reshape(y, {B, (rows / B) * hw, cfg.model_dim});
            }
            // generation: patch-embedded latents directly
            Var<T> xv = constant(tp, x_t);
            Var<T> tok = gen_embed.fwd(tp, fold_frames(tp, xv));
            int64_t rows = tok.dim(0), hw = tok.dim(1);
            return reshape(tok, {B, (rows / B) * hw, cfg.model_dim});
        }
    }
    throw std::runtime_error("unreachable");
}

template <typename T>
Tensor<T> patchify_pixels(const Tensor<T>& x, int64_t patch, int64_t temporal_factor) {
    int64_t B = x.dim(0), C = x.dim(1), Tn = x.dim(2), H = x.dim(3), W = x.dim(4);
    int64_t f = 1 + (Tn - 1) / temporal_factor;
    int64_t gh = H / patch, gw = W / patch;
    Tensor<T> out({B * f, gh * gw, C * patch * patch});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t g = 0; g < f; ++g) {
            int64_t t = g == 0 ? 0 : g * temporal_factor; // last raw frame of the window
            for (int64_t py = 0; py < gh; ++py)
                for (int64_t px = 0; px < gw; ++px) {
                    T* dst = out.data() +
                             ((b * f + g) * gh * gw + py * gw + px) * C * patch * patch;
                    for (int64_t c = 0; c < C; ++c)
                        for (int64_t dy = 0; dy < patch; ++dy)
                            for (int64_t dx = 0; dx < patch; ++dx)
                                dst[(c * patch + dy) * patch + dx] =
                                    x[(((b * C + c) * Tn + t) * H + py * patch + dy) * W +
                                      px * patch + dx];
                }
        }
    return out;
}

template struct ReprBuilder<float>;
template struct ReprBuilder<double>;
template NoisedLatent<float> noise_latent(const TensorF&, const std::vector<float>&, Rng&);
template NoisedLatent<double> noise_latent(const TensorD&, const std::vector<double>&, Rng&);
template Tensor<float> patchify_pixels(const Tensor<float>&, int64_t, int64_t);
template Tensor<double> patchify_pixels(const Tensor<double>&, int64_t, int64_t);

} // namespace umm
