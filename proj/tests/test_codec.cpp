#include "doctest.h"

#include "grad_check.hpp"
#include "umm/codec.hpp"

#include <cmath>
#include <cstring>

using namespace umm;

TEST_CASE("latent_shape arithmetic and preconditions") {
    CodecConfig cfg;
    CHECK(codec_latent_shape({3, 1, 128, 128}, cfg) == Shape{16, 1, 8, 8});
    CHECK(codec_latent_shape({3, 5, 128, 128}, cfg) == Shape{16, 2, 8, 8});
    CHECK(codec_latent_shape({3, 9, 256, 128}, cfg) == Shape{16, 3, 16, 8});
    CHECK_THROWS(codec_latent_shape({3, 4, 128, 128}, cfg)); // T mod 4 != 1
    CHECK_THROWS(codec_latent_shape({3, 1, 100, 128}, cfg));
    CodecConfig bad;
    bad.kl_weight = 0;
    CHECK_THROWS(bad.validate());
    bad = CodecConfig{};
    bad.spatial_factor = 12;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("encode: zero-eps sample equals mean; identical rows encode identically") {
    Codec<float> codec;
    Rng rng(11);
    codec.init(rng);
    Rng drng(5);
    TensorF one = TensorF::randn({1, 3, 1, 64, 64}, drng); // 64px keeps the test quick
    TensorF x({2, 3, 1, 64, 64});
    std::memcpy(x.data(), one.data(), size_t(one.numel()) * sizeof(float));
    std::memcpy(x.data() + one.numel(), one.data(), size_t(one.numel()) * sizeof(float));

    Tape<float> tp;
    tp.grad_enabled = false;
    auto [mean, logvar] = codec.encode(tp, x);
    Var<float> det = codec.sample_latent(tp, mean, logvar, nullptr);
    CHECK(bit_equal(det.val(), mean.val()));

    int64_t half = mean.val().numel() / 2;
    CHECK(std::memcmp(mean.val().data(), mean.val().data() + half, size_t(half) * sizeof(float)) == 0);

    Rng eps_rng(3);
    Var<float> st = codec.sample_latent(tp, mean, logvar, &eps_rng);
    CHECK(!bit_equal(st.val(), mean.val()));
}

TEST_CASE("causality: perturbing future raw frames never changes past latent frames") {
    Codec<float> codec;
    Rng rng(12);
    codec.init(rng);
    Rng drng(6);
    TensorF x = TensorF::randn({1, 3, 9, 64, 64}, drng, 0.5f);
    TensorF x2 = x.clone();
    // frames 5..8 feed only the last 4-frame window (latent frame 2)
    int64_t HW = 64 * 64;
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t t = 5; t < 9; ++t)
            for (int64_t i = 0; i < HW; ++i) x2[(c * 9 + t) * HW + i] += 1.0f;

    Tape<float> tp;
    tp.grad_enabled = false;
    auto [m1, lv1] = codec.encode(tp, x);
    auto [m2, lv2] = codec.encode(tp, x2);
    // layout (B, c, f, h, w): compare per (channel, frame) blocks
    int64_t C = m1.val().dim(1), G = m1.val().dim(2), S = m1.val().dim(3) * m1.val().dim(4);
    REQUIRE(G == 3);
    bool last_frame_changed = false;
    for (int64_t c = 0; c < C; ++c)
        for (int64_t g = 0; g < G; ++g) {
            const float* a = m1.val().data() + (c * G + g) * S;
            const float* b = m2.val().data() + (c * G + g) * S;
            const float* la = lv1.val().data() + (c * G + g) * S;
            const float* lb = lv2.val().data() + (c * G + g) * S;
            bool same = std::memcmp(a, b, size_t(S) * sizeof(float)) == 0 &&
                        std::memcmp(la, lb, size_t(S) * sizeof(float)) == 0;
            if (g < 2) {
                CHECK(same);
            } else if (!same) {
                last_frame_changed = true;
            }
        }
    CHECK(last_frame_changed);
}

TEST_CASE("decode inverts the latent shape and clamps pixels") {
    Codec<float> codec;
    Rng rng(13);
    codec.init(rng);
    Rng drng(7);
    TensorF x = TensorF::randn({1, 3, 5, 64, 64}, drng, 0.5f);
    TensorF z = codec.encode_mean(x);
    CHECK(z.shape == Shape{1, 16, 2, 4, 4});
    TensorF y = codec.decode_pixels(z);
    CHECK(y.shape == x.shape);
    for (float v : *y.storage) {
        CHECK(v <= 1.0f);
        CHECK(v >= -1.0f);
    }
    Tape<float> tp;
    tp.grad_enabled = false;
    TensorF zbad({1, 8, 2, 4, 4});
    CHECK_THROWS(codec.decode(tp, constant(tp, zbad)));
}

TEST_CASE("codec_loss closed forms") {
    Tape<float> tp;
    tp.grad_enabled = false;
    TensorF x = TensorF::from({4}, {0.1f, -0.2f, 0.3f, 0.0f});
    auto v = [&](TensorF t) { return constant(tp, std::move(t)); };

    // recon == x, mean = 0, logvar = 0 -> total 0
    auto l0 = codec_loss(tp, v(x.clone()), v(x.clone()), v(TensorF::zeros({4})),
                         v(TensorF::zeros({4})), 0.7f);
    CHECK(l0.val()[0] == doctest::Approx(0.0).epsilon(1e-7));

    // per-element KL for mean=1, logvar=0 is 0.5
    auto l1 = codec_loss(tp, v(x.clone()), v(x.clone()), v(TensorF::full({4}, 1.0f)),
                         v(TensorF::zeros({4})), 1.0f);
    CHECK(l1.val()[0] == doctest::Approx(0.5).epsilon(1e-6));

    // reconstruction term alone: recon - x = 2 everywhere -> mse 4
    auto l2 = codec_loss(tp, v(TensorF::zeros({4})), v(TensorF::full({4}, 2.0f)),
                         v(TensorF::zeros({4})), v(TensorF::zeros({4})), 1.0f);
    CHECK(l2.val()[0] == doctest::Approx(4.0).epsilon(1e-6));
}

// numerical-integration oracle for KL(N(mu, sigma^2) || N(0,1))
static double kl_quadrature(double mu, double logvar) {
    double var = std::exp(logvar);
    double sd = std::sqrt(var);
    auto logp = [&](double t) {
        return -0.5 * std::log(6.283185307179586 * var) - (t - mu) * (t - mu) / (2 * var);
    };
    auto logq = [&](double t) { return -0.5 * std::log(6.283185307179586) - t * t / 2; };
    const int N = 20000;
    double lo = mu - 14 * sd, hi = mu + 14 * sd, h = (hi - lo) / N;
    double acc = 0;
    for (int i = 0; i <= N; ++i) {
        double t = lo + h * i;
        double f = std::exp(logp(t)) * (logp(t) - logq(t));
        double w = (i == 0 || i == N) ? 1 : (i % 2 ? 4 : 2);
        acc += w * f;
    }
    return acc * h / 3;
}

TEST_CASE("closed-form KL matches quadrature within 1e-6") {
    for (auto [mu, lv] :
         {std::pair<double, double>{0, 0}, {1, 0}, {-0.7, 0.5}, {2.0, -1.0}, {0.3, 1.2}}) {
        Tape<double> tp;
        tp.grad_enabled = false;
        auto v = [&](double val) { return constant(tp, TensorD::full({1}, val)); };
        auto loss = codec_loss(tp, v(0), v(0), v(mu), v(lv), 1.0);
        double closed = loss.val()[0];
        CHECK(std::abs(closed - kl_quadrature(mu, lv)) < 1e-6);
    }
}

TEST_CASE("codec_loss gradient matches finite differences on a 4-parameter micro-net") {
    // encoder: mean = w0*x + b0, logvar = w1*x + b1; decode = identity(mean)
    Rng rng(21);
    TensorD x = TensorD::randn({6}, rng);
    auto err = umm::testing::check_grads(
        {TensorD::from({1}, {0.8}), TensorD::from({1}, {0.1}), TensorD::from({1}, {-0.3}),
         TensorD::from({1}, {0.2})},
        [&](Tape<double>& tp, std::vector<Var<double>>& p) {
            Var<double> xv = constant(tp, x.clone());
            Var<double> col = reshape(xv, {6, 1});
            auto bcast_mul = [&](Var<double> s) { return reshape(matmul(col, reshape(s, {1, 1})), {6}); };
            auto bcast_add = [&](Var<double> s) {
                Var<double> ones = constant(tp, TensorD::full({6, 1}, 1.0));
                return reshape(matmul(ones, reshape(s, {1, 1})), {6});
            };
            Var<double> mean = add(bcast_mul(p[0]), bcast_add(p[1]));
            Var<double> logvar = add(bcast_mul(p[2]), bcast_add(p[3]));
            return codec_loss(tp, xv, mean, mean, logvar, 0.5);
        });
    CHECK(err < 1e-4);
}

TEST_CASE("latent standardization round-trips") {
    LatentNorm norm;
    norm.mean = {0.5f, -1.0f};
    norm.std = {2.0f, 0.5f};
    Rng rng(9);
    TensorF z = TensorF::randn({2, 2, 1, 3, 3}, rng);
    TensorF s = standardize_latent(z, norm);
    TensorF back = unstandardize_latent(s, norm);
    CHECK(max_abs_diff(back, z) < 1e-6f);
}
