#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "vadkit/errors.hpp"

namespace vadkit {

// Dense row-major tensor. Scalar type is a template parameter so the
// gradient-check suite can run the exact same code in double precision
// while production paths stay float.
template <class S>
struct Tensor {
    std::vector<std::size_t> dims;
    std::vector<S> v;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> d) : dims(std::move(d)) {
        v.assign(count(dims), S(0));
    }
    Tensor(std::vector<std::size_t> d, std::vector<S> values)
        : dims(std::move(d)), v(std::move(values)) {
        if (v.size() != count(dims)) throw ShapeError("tensor value count does not match dims");
    }

    static std::size_t count(const std::vector<std::size_t>& d) {
        std::size_t n = 1;
        for (std::size_t x : d) n *= x;
        return d.empty() ? 0 : n;
    }

    std::size_t size() const { return v.size(); }
    S& operator[](std::size_t i) { return v[i]; }
    const S& operator[](std::size_t i) const { return v[i]; }

    // [H,W,C] indexing
    S& at3(std::size_t y, std::size_t x, std::size_t c) {
        return v[(y * dims[1] + x) * dims[2] + c];
    }
    const S& at3(std::size_t y, std::size_t x, std::size_t c) const {
        return v[(y * dims[1] + x) * dims[2] + c];
    }
    // [kh,kw,Cin,Cout] indexing
    S& at4(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
        return v[((a * dims[1] + b) * dims[2] + c) * dims[3] + d];
    }
    const S& at4(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
        return v[((a * dims[1] + b) * dims[2] + c) * dims[3] + d];
    }
    // [n,m] indexing
    S& at2(std::size_t r, std::size_t c) { return v[r * dims[1] + c]; }
    const S& at2(std::size_t r, std::size_t c) const { return v[r * dims[1] + c]; }

    void fill(S x) { std::fill(v.begin(), v.end(), x); }

    bool same_shape(const Tensor& o) const { return dims == o.dims; }

    template <class T>
    Tensor<T> cast() const {
        Tensor<T> out;
        out.dims = dims;
        out.v.reserve(v.size());
        for (S x : v) out.v.push_back(static_cast<T>(x));
        return out;
    }

    bool operator==(const Tensor& o) const { return dims == o.dims && v == o.v; }
};

}  // namespace vadkit
