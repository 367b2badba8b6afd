#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "tacit/error.hpp"

namespace tacit {

/// Dense row-major tensor of 32- or 64-bit floats. Plain value type; all
/// structure (graphs, optimizer slots) lives elsewhere.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(count(shape), T(0)) {}
    Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        require(data.size() == count(shape), ErrorCategory::invalid_argument,
                "tensor data length does not match shape");
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, T v) {
        Tensor t(std::move(s));
        for (auto& x : t.data) x = v;
        return t;
    }

    static size_t count(const std::vector<int>& s) {
        size_t n = 1;
        for (int d : s) {
            require(d >= 0, ErrorCategory::invalid_argument, "negative tensor dimension");
            n *= static_cast<size_t>(d);
        }
        return n;
    }

    size_t numel() const { return data.size(); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    // 2-D accessors; valid when ndim() == 2.
    int rows() const { return shape[0]; }
    int cols() const { return shape[1]; }
    T& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
    T at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool operator==(const Tensor& o) const { return shape == o.shape && data == o.data; }
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
    Tensor<To> out;
    out.shape = t.shape;
    out.data.reserve(t.data.size());
    for (From v : t.data) out.data.push_back(static_cast<To>(v));
    return out;
}

template <typename T>
std::string shape_string(const Tensor<T>& t) {
    std::string s = "[";
    for (size_t i = 0; i < t.shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(t.shape[i]);
    }
    return s + "]";
}

}  // namespace tacit
