#pragma once

// Dense row-major tensors and complex grids. These are plain value types;
// all math lives in numerics.hpp.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "mfdlab/common.hpp"

namespace mfdlab {

template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, T fill = T(0))
        : shape_(std::move(shape)), data_(count(shape_), fill) {}

    Tensor(std::initializer_list<std::size_t> shape, T fill = T(0))
        : Tensor(std::vector<std::size_t>(shape), fill) {}

    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t e : shape) n *= e;
        return shape.empty() ? 0 : n;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_[axis]; }
    std::size_t size() const { return data_.size(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // 2-D and 3-D accessors; the tensor must have the matching rank.
    T& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
    T& at(std::size_t p, std::size_t r, std::size_t c) {
        return data_[(p * shape_[1] + r) * shape_[2] + c];
    }
    const T& at(std::size_t p, std::size_t r, std::size_t c) const {
        return data_[(p * shape_[1] + r) * shape_[2] + c];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (const T& v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor& operator+=(const Tensor& o) {
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Tensor& operator*=(T s) {
        for (auto& v : data_) v *= s;
        return *this;
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

/// Split-storage complex grid for 2-D transforms.
template <typename T>
struct ComplexGrid {
    std::size_t rows = 0, cols = 0;
    std::vector<T> re, im;

    ComplexGrid() = default;
    ComplexGrid(std::size_t r, std::size_t c) : rows(r), cols(c), re(r * c, T(0)), im(r * c, T(0)) {}

    std::size_t size() const { return re.size(); }
    std::size_t idx(std::size_t r, std::size_t c) const { return r * cols + c; }

    T magnitude2(std::size_t i) const { return re[i] * re[i] + im[i] * im[i]; }
};

template <typename T>
T dot(const std::vector<T>& a, const std::vector<T>& b) {
    T s = T(0);
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    T m = T(0);
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, static_cast<T>(std::abs(static_cast<double>(a[i] - b[i]))));
    return m;
}

}  // namespace mfdlab
