// Finite-difference verification of every tape op's backward pass.

#include "doctest.h"

#include "grad_check.hpp"
#include "umm/ops_conv.hpp"

using namespace umm;
using umm::testing::check_grads;

namespace {
Rng g_rng(42);

Tensor<double> rnd(Shape s, double scl = 1.0) { return Tensor<double>::randn(std::move(s), g_rng, scl); }
} // namespace

TEST_CASE("grad: matmul + bias") {
    auto err = check_grads({rnd({3, 4}), rnd({4, 5}), rnd({5})},
                           [](Tape<double>& tp, std::vector<Var<double>>& v) {
                               (void)tp;
                               return mean_all(linear(v[0], v[1], v[2]));
                           });
    CHECK(err < 1e-6);
}

TEST_CASE("grad: bmm nn and nt") {
    auto err = check_grads({rnd({2, 3, 4}), rnd({2, 4, 5})},
                           [](Tape<double>&, std::vector<Var<double>>& v) {
                               return mean_all(bmm_nn(v[0], v[1]));
                           });
    CHECK(err < 1e-6);
    err = check_grads({rnd({2, 3, 4}), rnd({2, 5, 4})},
                      [](Tape<double>&, std::vector<Var<double>>& v) {
                          return mse(bmm_nt(v[0], v[1], 0.5), bmm_nt(v[1], v[1], 1.0));
                      });
    CHECK(err < 1e-6);
}

TEST_CASE("grad: elementwise add/sub/mul/affine/exp") {
    auto err = check_grads({rnd({2, 6}), rnd({2, 6})},
                           [](Tape<double>&, std::vector<Var<double>>& v) {
                               auto a = add(v[0], v[1]);
                               auto s = sub(a, mul(v[0], v[1]));
                               auto e = exp_op(affine(s, 0.3, -0.1));
                               return mean_all(e);
                           });
    CHECK(err < 1e-6);
}

TEST_CASE("grad: gelu and silu") {
    auto err = check_grads({rnd({17})}, [](Tape<double>&, std::vector<Var<double>>& v) {
        return mean_all(gelu(v[0]));
    });
    CHECK(err < 1e-6);
    err = check_grads({rnd({17})}, [](Tape<double>&, std::vector<Var<double>>& v) {
        return mean_all(silu(v[0]));
    });
    CHECK(err < 1e-6);
}

TEST_CASE("grad: layernorm") {
    auto err = check_grads({rnd({4, 7}), rnd({7}), rnd({7})},
                           [](Tape<double>&, std::vector<Var<double>>& v) {
                               auto y = layernorm(v[0], v[1], v[2]);
                               return mse(y, scale(v[0], 0.0));
                           });
    CHECK(err < 1e-5);
}

TEST_CASE("grad: softmax with additive mask") {
    Tensor<double> mask({1, 3, 3});
    mask[1] = -1e9; // one masked slot
    auto err = check_grads({rnd({2, 3, 3})}, [mask](Tape<double>&, std::vector<Var<double>>& v) {
        auto m = add_mask(v[0], mask, 2);
        return mean_all(mul(softmax_last(m), m));
    });
    CHECK(err < 1e-6);
}

TEST_CASE("grad: rope rotation") {
    int64_t B = 1, H = 2, L = 3, D = 4;
    Tensor<double> cs({B, L, D / 2}), sn({B, L, D / 2});
    Rng r(7);
    for (int64_t i = 0; i < cs.numel(); ++i) {
        double a = r.next_double() * 3.0;
        cs[i] = std::cos(a);
        sn[i] = std::sin(a);
    }
    auto err = check_grads({rnd({B, H, L, D})}, [cs, sn](Tape<double>&, std::vector<Var<double>>& v) {
        return mean_all(mul(rope(v[0], cs, sn), v[0]));
    });
    CHECK(err < 1e-6);
}

TEST_CASE("grad: reshape/transpose/slice/concat/gather") {
    auto err = check_grads(
        {rnd({2, 3, 2, 2}), rnd({2, 2, 2, 2})}, [](Tape<double>&, std::vector<Var<double>>& v) {
            auto t = transpose12(v[0]);                   // (2,2,3,2)
            auto s = slice_axis(t, 2, 1, 2);              // (2,2,2,2)
            auto c = concat_axis<double>({s, v[1]}, 1);   // (2,4,2,2)
            auto r = reshape(c, {2, 8, 2});
            std::vector<int64_t> idx = {0, 3, 1, 1}; // per-batch rows
            auto g = gather_rows(r, idx, 2);
            return mean_all(mul(g, g));
        });
    CHECK(err < 1e-6);
}

TEST_CASE("grad: embedding / cross entropy / mse / sums") {
    std::vector<int> ids = {1, 0, 2, 1};
    auto err = check_grads({rnd({3, 4})}, [ids](Tape<double>&, std::vector<Var<double>>& v) {
        auto e = embedding(v[0], ids);
        std::vector<int> tgt = {2, -1, 0, 3};
        return cross_entropy(e, tgt);
    });
    CHECK(err < 1e-6);
    err = check_grads({rnd({5}), rnd({5})}, [](Tape<double>&, std::vector<Var<double>>& v) {
        return add(mse(v[0], v[1]), add(sum_all(v[0]), mean_all(v[1])));
    });
    CHECK(err < 1e-6);
}

TEST_CASE("grad: modulate and gated_add broadcast ops") {
    auto err = check_grads({rnd({2, 3, 4}), rnd({2, 4}), rnd({2, 4}), rnd({2, 3, 4}), rnd({2, 4})},
                           [](Tape<double>&, std::vector<Var<double>>& v) {
                               auto m = modulate(v[0], v[1], v[2]);
                               auto g = gated_add(m, v[3], v[4]);
                               return mean_all(mul(g, g));
                           });
    CHECK(err < 1e-6);
}

TEST_CASE("grad: conv2d stride/pad variants") {
    for (auto [stride, pad] : {std::pair<int64_t, int64_t>{1, 1}, {2, 1}, {1, 0}}) {
        auto err = check_grads({rnd({2, 3, 5, 5}), rnd({4, 3, 3, 3}, 0.5), rnd({4})},
                               [stride, pad](Tape<double>&, std::vector<Var<double>>& v) {
                                   auto y = conv2d(v[0], v[1], v[2], stride, pad);
                                   return mean_all(mul(y, y));
                               });
        CHECK(err < 1e-5);
    }
}

TEST_CASE("grad: upsample2x and channel layernorm") {
    auto err = check_grads({rnd({2, 3, 2, 2})}, [](Tape<double>&, std::vector<Var<double>>& v) {
        return mean_all(mul(upsample2x(v[0]), upsample2x(v[0])));
    });
    CHECK(err < 1e-6);
    err = check_grads({rnd({2, 5, 6}), rnd({5}), rnd({5})},
                      [](Tape<double>&, std::vector<Var<double>>& v) {
                          auto y = channel_layernorm(v[0], v[1], v[2]);
                          return mean_all(mul(y, y));
                      });
    CHECK(err < 1e-5);
}

TEST_CASE("fan-out accumulates gradients from all consumers") {
    auto err = check_grads({rnd({3, 3})}, [](Tape<double>&, std::vector<Var<double>>& v) {
        auto a = silu(v[0]);
        return add(mean_all(mul(a, v[0])), mse(a, v[0]));
    });
    CHECK(err < 1e-6);
}
