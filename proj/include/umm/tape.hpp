#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "umm/kernels.hpp"
#include "umm/tensor.hpp"

namespace umm {

// Named trainable array plus its optimizer state. Model modules own these;
// the tape references them per forward pass.
template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> adam_m;
    Tensor<T> adam_v;
    bool trainable = true;

    void init(std::string n, Tensor<T> v) {
        name = std::move(n);
        value = std::move(v);
        grad = Tensor<T>::zeros(value.shape);
        adam_m = Tensor<T>::zeros(value.shape);
        adam_v = Tensor<T>::zeros(value.shape);
    }
};

template <typename T>
using ParamRefs = std::vector<Param<T>*>;

// Define-by-run reverse-mode tape. Ops execute eagerly and append a backward
// closure; backward() walks the recording in reverse. Values and grads live
// on the tape; parameter leaves alias their Param's grad buffer so reverse
// accumulation lands directly in the module.
template <typename T>
class Tape {
public:
    // backward receives (tape, own node id) so it can read its incoming grad
    using BackwardFn = std::function<void(Tape&, int)>;

    struct Node {
        Tensor<T> value;
        Tensor<T> grad; // undefined until needed
        bool requires_grad = false;
        BackwardFn backward;
    };

    std::vector<Node> nodes;
    bool grad_enabled = true;

    void reset() { nodes.clear(); }

    int emplace(Tensor<T> value, bool requires_grad, BackwardFn bwd) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad && grad_enabled;
        if (grad_enabled) n.backward = std::move(bwd);
        nodes.push_back(std::move(n));
        return int(nodes.size()) - 1;
    }

    Tensor<T>& value(int id) { return nodes[size_t(id)].value; }
    bool needs_grad(int id) const { return nodes[size_t(id)].requires_grad; }

    // grad buffer, allocated (zeroed) on first touch
    Tensor<T>& grad(int id) {
        Node& n = nodes[size_t(id)];
        if (!n.grad.defined()) n.grad = Tensor<T>::zeros(n.value.shape);
        return n.grad;
    }

    bool has_grad(int id) const { return nodes[size_t(id)].grad.defined(); }

    void backward(int loss_id) {
        if (!grad_enabled) throw std::runtime_error("backward on no-grad tape");
        Tensor<T>& g = grad(loss_id);
        std::fill(g.storage->begin(), g.storage->end(), T(1));
        for (int id = loss_id; id >= 0; --id) {
            Node& n = nodes[size_t(id)];
            if (n.backward && n.grad.defined() && n.requires_grad) n.backward(*this, id);
        }
    }
};

template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    int id = -1;

    Var() = default;
    Var(Tape<T>* t, int i) : tape(t), id(i) {}

    bool defined() const { return tape != nullptr && id >= 0; }
    Tensor<T>& val() const { return tape->value(id); }
    const Shape& shape() const { return tape->value(id).shape; }
    int64_t dim(int i) const { return tape->value(id).dim(i); }
    bool requires_grad() const { return tape->needs_grad(id); }
};

template <typename T>
Var<T> constant(Tape<T>& tp, Tensor<T> v) {
    return {&tp, tp.emplace(std::move(v), false, nullptr)};
}

template <typename T>
Var<T> use_param(Tape<T>& tp, Param<T>& p) {
    int id = tp.emplace(p.value, true, nullptr);
    if (tp.grad_enabled && p.trainable) {
        // alias the param's grad buffer so accumulation is direct
        tp.nodes[size_t(id)].grad = p.grad;
    } else {
        tp.nodes[size_t(id)].requires_grad = false;
    }
    return {&tp, id};
}

// input that wants a gradient but is not a parameter (finite-difference tests)
template <typename T>
Var<T> input(Tape<T>& tp, Tensor<T> v) {
    return {&tp, tp.emplace(std::move(v), true, nullptr)};
}

} // namespace umm
