#pragma once

#include <cassert>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "umm/rng.hpp"

namespace umm {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        out += std::to_string(s[i]);
        if (i + 1 < s.size()) out += ",";
    }
    return out + ")";
}

// Dense row-major tensor. Storage is shared; reshape aliases, clone copies.
template <typename T>
struct Tensor {
    Shape shape;
    std::shared_ptr<std::vector<T>> storage;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)) {
        storage = std::make_shared<std::vector<T>>(size_t(shape_numel(shape)), T(0));
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

    static Tensor full(Shape s, T v) {
        Tensor t(std::move(s));
        std::fill(t.storage->begin(), t.storage->end(), v);
        return t;
    }

    static Tensor from(Shape s, std::initializer_list<T> vals) {
        Tensor t(std::move(s));
        assert(int64_t(vals.size()) == t.numel());
        std::copy(vals.begin(), vals.end(), t.data());
        return t;
    }

    static Tensor randn(Shape s, Rng& rng, T stddev = T(1)) {
        Tensor t(std::move(s));
        T* p = t.data();
        for (int64_t i = 0, n = t.numel(); i < n; ++i) p[i] = T(rng.next_normal()) * stddev;
        return t;
    }

    static Tensor uniform(Shape s, Rng& rng, T lo, T hi) {
        Tensor t(std::move(s));
        T* p = t.data();
        for (int64_t i = 0, n = t.numel(); i < n; ++i) p[i] = lo + T(rng.next_double()) * (hi - lo);
        return t;
    }

    bool defined() const { return storage != nullptr; }
    int64_t numel() const { return shape_numel(shape); }
    int ndim() const { return int(shape.size()); }
    int64_t dim(int i) const { return shape[size_t(i < 0 ? int(shape.size()) + i : i)]; }

    T* data() { return storage->data(); }
    const T* data() const { return storage->data(); }

    T& operator[](int64_t i) { return (*storage)[size_t(i)]; }
    const T& operator[](int64_t i) const { return (*storage)[size_t(i)]; }

    // aliasing reshape; -1 infers one dimension
    Tensor reshaped(Shape s) const {
        int64_t known = 1, infer = -1;
        for (size_t i = 0; i < s.size(); ++i) {
            if (s[i] == -1) {
                infer = int64_t(i);
            } else {
                known *= s[i];
            }
        }
        if (infer >= 0) s[size_t(infer)] = numel() / known;
        if (shape_numel(s) != numel())
            throw std::runtime_error("reshape " + shape_str(shape) + " -> " + shape_str(s));
        Tensor t;
        t.shape = std::move(s);
        t.storage = storage;
        return t;
    }

    Tensor clone() const {
        Tensor t;
        t.shape = shape;
        t.storage = std::make_shared<std::vector<T>>(*storage);
        return t;
    }

    void zero_() { std::fill(storage->begin(), storage->end(), T(0)); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> t;
        t.shape = shape;
        t.storage = std::make_shared<std::vector<U>>(size_t(numel()));
        for (int64_t i = 0, n = numel(); i < n; ++i) (*t.storage)[size_t(i)] = U((*storage)[size_t(i)]);
        return t;
    }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename T>
inline T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    assert(a.numel() == b.numel());
    T m = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        T d = std::abs(a[i] - b[i]);
        if (d > m) m = d;
    }
    return m;
}

template <typename T>
inline bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape != b.shape) return false;
    return std::memcmp(a.data(), b.data(), size_t(a.numel()) * sizeof(T)) == 0;
}

} // namespace umm
