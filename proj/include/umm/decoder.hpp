#pragma once

#include "umm/attn.hpp"
#include "umm/toy_data.hpp"

// Decoder-only LM over mixed text/visual sequences: layout assembly, the
// causal-text / bidirectional-visual attention mask, multimodal 3-axis
// rotary coordinates, autoregressive text generation.

namespace umm {

enum class Tag : int { text_prompt = 0, timestep = 1, visual = 2, text_answer = 3, pad = 4 };

struct SegmentSpan {
    Tag tag = Tag::text_prompt;
    int64_t start = 0, len = 0;
    int64_t f = 0, h = 0, w = 0; // visual extents (visual spans only)
    float t = 1.0f;              // timestep owning this visual block
    bool noised = false;         // true for the generation target block
};

struct SampleLayout {
    std::vector<SegmentSpan> segs;
    int64_t real_len = 0;

    const SegmentSpan* find(Tag tag, int occurrence = 0) const {
        int seen = 0;
        for (auto& s : segs)
            if (s.tag == tag && seen++ == occurrence) return &s;
        return nullptr;
    }
};

struct MixedLayout {
    int64_t L = 0; // padded length
    std::vector<SampleLayout> samples;

    int64_t batch() const { return int64_t(samples.size()); }
};

// ---- layout construction -----------------------------------------------------

// one visual block description
struct VisualSpec {
    int64_t f = 0, h = 0, w = 0;
    float t = 1.0f;
    bool noised = false;
    bool with_timestep = true; // prepend a timestep token for this block
};

// builds the span list for one sample: [prompt? | (ts? visual)* | boa answer eot?]
// Validation mirrors the MixedSequence invariants.
SampleLayout make_sample_layout(int64_t prompt_len, const std::vector<VisualSpec>& visuals,
                                int64_t answer_len /* -1 = no answer segment */);

MixedLayout pad_layouts(std::vector<SampleLayout> samples);

// (B, L, L) additive mask: 0 = allowed, -1e9 = blocked.
// text rows attend [0, i]; visual rows (timestep included) attend everything
// before their block plus the whole block; nothing attends pads; pads attend
// only themselves.
template <typename T>
Tensor<T> build_attention_mask(const MixedLayout& layout);

// 3-axis coordinates, flattened (B*L*3); pads get (0,0,0)
std::vector<int64_t> assign_positions(const MixedLayout& layout);

// ---- decoder module ------------------------------------------------------------

struct DecoderConfig {
    int64_t dim = 128;
    int64_t layers = 8;
    int64_t heads = 4;
    int64_t mlp_ratio = 4;
    int64_t vocab = 46;
};

template <typename T>
struct Decoder {
    DecoderConfig cfg;
    Param<T> tok_emb;        // (vocab, d)
    LinearLayer<T> ts_embed; // sinusoidal features -> affine -> d
    std::vector<AttnBlock<T>> blocks;
    LayerNormLayer<T> final_ln;
    LinearLayer<T> lm_head;

    void init(Rng& rng);
    void collect_params(ParamRefs<T>& out);
    // the timestep embedder trains with the connector group in stage 1
    void collect_ts_params(ParamRefs<T>& out) { ts_embed.collect(out); }

    RopeSplit rope_split() const { return RopeSplit::for_head_dim(cfg.dim / cfg.heads); }

    Var<T> embed_tokens(Tape<T>& tp, const std::vector<int>& ids); // (N, d)
    Var<T> embed_timestep(Tape<T>& tp, const std::vector<T>& t);   // (B, d)

    // hidden states after the full stack + final norm (pre-head)
    Var<T> forward_hidden(Tape<T>& tp, Var<T> seq, const Tensor<T>& mask,
                          const RopeTables<T>& rope_tables);

    Var<T> lm_logits(Tape<T>& tp, Var<T> hidden) { return lm_head.fwd(tp, hidden); }
};

extern template struct Decoder<float>;
extern template struct Decoder<double>;
extern template Tensor<float> build_attention_mask<float>(const MixedLayout&);
extern template Tensor<double> build_attention_mask<double>(const MixedLayout&);

} // namespace umm
