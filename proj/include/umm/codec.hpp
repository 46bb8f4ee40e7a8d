#pragma once

#include "umm/nn.hpp"
#include "umm/toy_data.hpp"

// Trainable 3D-causal variational autoencoder over toy frames. Temporal
// causality comes from explicit frame grouping (frame 0 alone, then windows
// of 4) encoded by a shared 2D stack, followed by a k=2 left-padded temporal
// mix, so latent frame i can only see raw frames <= 4i.

namespace umm {

struct CodecConfig {
    int spatial_factor = 16;
    int temporal_factor = 4;
    int latent_channels = 16;
    float kl_weight = 1e-4f;

    void validate() const;
};

// per-channel standardization of latents, estimated on the training corpus
struct LatentNorm {
    std::vector<float> mean; // one per latent channel
    std::vector<float> std;

    bool ready() const { return !mean.empty(); }
};

// (3, T, H, W) -> (c, 1+(T-1)/tf, H/sf, W/sf); throws on divisibility errors
Shape codec_latent_shape(const Shape& input_shape, const CodecConfig& cfg);

template <typename T>
struct Codec {
    CodecConfig cfg;

    Conv2dLayer<T> e0, e1, e2, e3;
    ChannelNormLayer<T> en1, en2, en3;
    Conv2dLayer<T> et_cur, et_prev; // temporal mix, 1x1
    Conv2dLayer<T> e_head;          // 1x1 -> 2*latent_channels

    Conv2dLayer<T> d_in; // 1x1 latent -> feature
    Conv2dLayer<T> dt_cur, dt_prev;
    Conv2dLayer<T> d0, d1, d2, d3, d4, d_out;
    ChannelNormLayer<T> dn0, dn1, dn2, dn3;

    void init(Rng& rng);
    void collect_params(ParamRefs<T>& out);

    // x (B, 3, T, H, W) consumed as a constant; returns mean/logvar (B, c, f, h, w)
    std::pair<Var<T>, Var<T>> encode(Tape<T>& tp, const Tensor<T>& x) const;

    // rng == nullptr -> deterministic path (sample = mean)
    Var<T> sample_latent(Tape<T>& tp, Var<T> mean, Var<T> logvar, Rng* rng) const;

    // z (B, c, f, h, w) -> (B, 3, T, H, W), unclamped
    Var<T> decode(Tape<T>& tp, Var<T> z) const;

    // reconstruction mse + kl_weight * mean closed-form KL to N(0,1)
    Var<T> loss(Tape<T>& tp, const Tensor<T>& x, Var<T> recon, Var<T> mean, Var<T> logvar) const;

    // ---- inference helpers (fresh no-grad tape inside) ----
    Tensor<T> encode_mean(const Tensor<T>& x) const;
    Tensor<T> decode_pixels(const Tensor<T>& z) const; // clamped to [-1, 1]
};

// standalone closed-form objective, also usable on raw tensors in tests
template <typename T>
Var<T> codec_loss(Tape<T>& tp, Var<T> x, Var<T> recon, Var<T> mean, Var<T> logvar, T kl_weight);

template <typename T>
Tensor<T> standardize_latent(const Tensor<T>& z, const LatentNorm& norm);
template <typename T>
Tensor<T> unstandardize_latent(const Tensor<T>& z, const LatentNorm& norm);

extern template struct Codec<float>;
extern template struct Codec<double>;

} // namespace umm
