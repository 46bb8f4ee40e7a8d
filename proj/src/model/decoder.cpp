#include "umm/decoder.hpp"

namespace umm {

SampleLayout make_sample_layout(int64_t prompt_len, const std::vector<VisualSpec>& visuals,
                                int64_t answer_len) {
    SampleLayout s;
    int64_t pos = 0;
    if (prompt_len > 0) {
        s.segs.push_back({Tag::text_prompt, pos, prompt_len, 0, 0, 0, 0.f, false});
        pos += prompt_len;
    }
    for (const auto& v : visuals) {
        if (v.with_timestep) {
            SegmentSpan ts{Tag::timestep, pos, 1, 0, 0, 0, v.t, v.noised};
            s.segs.push_back(ts);
            pos += 1;
        } else if (v.noised) {
            throw std::runtime_error("layout: a noised visual block needs a timestep token");
        }
        int64_t n = v.f * v.h * v.w;
        if (n <= 0) throw std::runtime_error("layout: empty visual block");
        s.segs.push_back({Tag::visual, pos, n, v.f, v.h, v.w, v.t, v.noised});
        pos += n;
    }
    if (answer_len >= 0) {
        // boa + answer + eot
        s.segs.push_back({Tag::text_answer, pos, answer_len + 2, 0, 0, 0, 0.f, false});
        pos += answer_len + 2;
    }
    if (pos == 0) throw std::runtime_error("layout: empty sequence");
    s.real_len = pos;
    return s;
}

MixedLayout pad_layouts(std::vector<SampleLayout> samples) {
    MixedLayout out;
    for (auto& s : samples) out.L = std::max(out.L, s.real_len);
    out.samples = std::move(samples);
    return out;
}

namespace {

// block boundaries per position: for visual rows we need [0, block_end)
struct RowInfo {
    Tag tag;
    int64_t block_end; // visual rows: end of own visual block (its ts included)
};

std::vector<RowInfo> row_infos(const SampleLayout& s, int64_t L) {
    std::vector<RowInfo> rows(size_t(L), {Tag::pad, 0});
    for (auto& seg : s.segs) {
        for (int64_t i = seg.start; i < seg.start + seg.len; ++i) {
            rows[size_t(i)].tag = seg.tag;
            rows[size_t(i)].block_end = seg.start + seg.len;
        }
    }
    // a timestep token belongs to the visual block that follows it
    for (auto& seg : s.segs) {
        if (seg.tag != Tag::timestep) continue;
        for (auto& v : s.segs)
            if (v.tag == Tag::visual && v.start == seg.start + 1)
                rows[size_t(seg.start)].block_end = v.start + v.len;
    }
    return rows;
}

} // namespace

template <typename T>
Tensor<T> build_attention_mask(const MixedLayout& layout) {
    int64_t B = layout.batch(), L = layout.L;
    const T blocked = T(-1e9);
    Tensor<T> mask = Tensor<T>::full({B, L, L}, blocked);
    for (int64_t b = 0; b < B; ++b) {
        auto rows = row_infos(layout.samples[size_t(b)], L);
        T* m = mask.data() + b * L * L;
        for (int64_t i = 0; i < L; ++i) {
            if (rows[size_t(i)].tag == Tag::pad) {
                m[i * L + i] = T(0); // keep softmax defined; output unused
                continue;
            }
            bool visual_row =
                rows[size_t(i)].tag == Tag::visual || rows[size_t(i)].tag == Tag::timestep;
            int64_t hi = visual_row ? rows[size_t(i)].block_end : i + 1;
            for (int64_t j = 0; j < hi; ++j)
                if (rows[size_t(j)].tag != Tag::pad) m[i * L + j] = T(0);
        }
    }
    return mask;
}

std::vector<int64_t> assign_positions(const MixedLayout& layout) {
    int64_t B = layout.batch(), L = layout.L;
    std::vector<int64_t> pos(size_t(B * L * 3), 0);
    for (int64_t b = 0; b < B; ++b) {
        const auto& s = layout.samples[size_t(b)];
        int64_t p = 0;
        for (auto& seg : s.segs) {
            int64_t* base = pos.data() + (b * L + seg.start) * 3;
            if (seg.tag == Tag::visual) {
                int64_t p0 = p;
                int64_t idx = 0;
                for (int64_t fi = 0; fi < seg.f; ++fi)
                    for (int64_t r = 0; r < seg.h; ++r)
                        for (int64_t c = 0; c < seg.w; ++c, ++idx) {
                            base[idx * 3 + 0] = p0 + fi;
                            base[idx * 3 + 1] = p0 + r;
                            base[idx * 3 + 2] = p0 + c;
                        }
                p = p0 + std::max({seg.f, seg.h, seg.w});
            } else {
                for (int64_t i = 0; i < seg.len; ++i) {
                    base[i * 3 + 0] = p;
                    base[i * 3 + 1] = p;
                    base[i * 3 + 2] = p;
                    ++p;
                }
            }
        }
    }
    return pos;
}

template <typename T>
void Decoder<T>::init(Rng& rng) {
    tok_emb.init("decoder.tok_emb", Tensor<T>::randn({cfg.vocab, cfg.dim}, rng, T(0.02)));
    ts_embed.init("tsembed.affine", rng, cfg.dim, cfg.dim);
    blocks.resize(size_t(cfg.layers));
    for (int64_t i = 0; i < cfg.layers; ++i)
        blocks[size_t(i)].init("decoder.block" + std::to_string(i), rng, cfg.dim, cfg.heads,
                               cfg.mlp_ratio, /*adaln=*/false);
    final_ln.init("decoder.final_ln", cfg.dim);
    lm_head.init("decoder.lm_head", rng, cfg.dim, cfg.vocab);
}

template <typename T>
void Decoder<T>::collect_params(ParamRefs<T>& out) {
    out.push_back(&tok_emb);
    for (auto& b : blocks) b.collect(out);
    final_ln.collect(out);
    lm_head.collect(out);
}

template <typename T>
Var<T> Decoder<T>::embed_tokens(Tape<T>& tp, const std::vector<int>& ids) {
    return embedding(use_param(tp, tok_emb), ids);
}

template <typename T>
Var<T> Decoder<T>::embed_timestep(Tape<T>& tp, const std::vector<T>& t) {
    Var<T> feats = constant(tp, timestep_features(t, cfg.dim));
    return ts_embed.fwd(tp, feats);
}

template <typename T>
Var<T> Decoder<T>::forward_hidden(Tape<T>& tp, Var<T> seq, const Tensor<T>& mask,
                                  const RopeTables<T>& rope_tables) {
    AttnContext<T> ctx;
    ctx.mask = &mask;
    ctx.rope = &rope_tables;
    Var<T> x = seq;
    for (auto& b : blocks) x = b.fwd(tp, x, ctx);
    ensure_finite(x.val(), "decoder.blocks");
    return final_ln.fwd(tp, x);
}

template struct Decoder<float>;
template struct Decoder<double>;
template Tensor<float> build_attention_mask<float>(const MixedLayout&);
template Tensor<double> build_attention_mask<double>(const MixedLayout&);

} // namespace umm
