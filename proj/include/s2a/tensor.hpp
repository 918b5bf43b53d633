#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "s2a/errors.hpp"

namespace s2a {

// Dense row-major tensor. Rank 1-3 is all the model needs.
// grad, when non-empty, is a same-size accumulator filled by Tape::backward.
template <typename T>
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<T> data;
    bool requires_grad = false;
    std::vector<T> grad;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel()), T(0));
    }
    Tensor(std::vector<int64_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<int64_t>(data.size()) != numel())
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str());
    }

    int64_t numel() const {
        int64_t n = 1;
        for (int64_t e : shape) {
            if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_str());
            n *= e;
        }
        return n;
    }

    int rank() const { return static_cast<int>(shape.size()); }
    int64_t rows() const { return shape.empty() ? 1 : shape[0]; }
    int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    T& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
    const T& at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        os << "]";
        return os.str();
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        out.requires_grad = requires_grad;
        return out;
    }
};

template <typename T>
inline Tensor<T> make_matrix(int64_t rows, int64_t cols) {
    return Tensor<T>({rows, cols});
}

template <typename T>
inline Tensor<T> make_vector(int64_t n) {
    return Tensor<T>({n});
}

inline std::string shape_to_str(const std::vector<int64_t>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

}  // namespace s2a
