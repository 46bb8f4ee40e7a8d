#pragma once

// Central finite-difference gradient checker (the independent oracle for all
// backward implementations). Everything runs in double.

#include "doctest.h"

#include "umm/ops.hpp"

#include <functional>
#include <vector>

namespace umm::testing {

using BuildFn = std::function<Var<double>(Tape<double>&, std::vector<Var<double>>&)>;

inline double eval_loss(const std::vector<Tensor<double>>& inputs, const BuildFn& build) {
    Tape<double> tp;
    tp.grad_enabled = false;
    std::vector<Var<double>> vars;
    vars.reserve(inputs.size());
    for (const auto& t : inputs) vars.push_back(constant(tp, t.clone()));
    return build(tp, vars).val()[0];
}

// max relative error between analytic and central-difference gradients
inline double check_grads(std::vector<Tensor<double>> inputs, const BuildFn& build,
                          double h = 1e-5) {
    Tape<double> tp;
    std::vector<Var<double>> vars;
    for (auto& t : inputs) vars.push_back(input(tp, t.clone()));
    Var<double> loss = build(tp, vars);
    REQUIRE(loss.val().numel() == 1);
    tp.backward(loss.id);

    double worst = 0;
    for (size_t vi = 0; vi < inputs.size(); ++vi) {
        Tensor<double> analytic = tp.has_grad(vars[vi].id) ? tp.grad(vars[vi].id)
                                                           : Tensor<double>::zeros(inputs[vi].shape);
        for (int64_t i = 0; i < inputs[vi].numel(); ++i) {
            double orig = inputs[vi][i];
            inputs[vi][i] = orig + h;
            double fp = eval_loss(inputs, build);
            inputs[vi][i] = orig - h;
            double fm = eval_loss(inputs, build);
            inputs[vi][i] = orig;
            double fd = (fp - fm) / (2 * h);
            double an = analytic[i];
            double err = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

} // namespace umm::testing
