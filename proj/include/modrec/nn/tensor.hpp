// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "modrec/error.hpp"

namespace modrec::nn {

using Shape = std::array<std::size_t, 4>;  // batch, channels, height, width

inline std::string shape_str(const Shape& s) {
    return "(" + std::to_string(s[0]) + "x" + std::to_string(s[1]) + "x" + std::to_string(s[2]) + "x" +
           std::to_string(s[3]) + ")";
}

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

/// Dense row-major 4-D array. Storage is aligned to Eigen's packet size:
/// the GEMM kernels peel differently for different base alignments, which
/// would otherwise make results depend on where the heap put the buffer.
template <typename T>
class Tensor {
public:
    using Storage = std::vector<T, Eigen::aligned_allocator<T>>;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(count(shape), fill) {}
    Tensor(Shape shape, Storage data) : shape_(shape), data_(std::move(data)) { check_size(); }
    Tensor(Shape shape, const std::vector<T>& data) : shape_(shape), data_(data.begin(), data.end()) { check_size(); }

    static std::size_t count(const Shape& s) { return s[0] * s[1] * s[2] * s[3]; }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t dim(std::size_t i) const noexcept { return shape_[i]; }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t batch() const noexcept { return shape_[0]; }
    std::size_t per_sample() const noexcept { return shape_[1] * shape_[2] * shape_[3]; }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    /// Batch x features view.
    MatrixMap<T> matrix() noexcept {
        return {data_.data(), static_cast<Eigen::Index>(batch()), static_cast<Eigen::Index>(per_sample())};
    }
    ConstMatrixMap<T> matrix() const noexcept {
        return {data_.data(), static_cast<Eigen::Index>(batch()), static_cast<Eigen::Index>(per_sample())};
    }

    void reshape(Shape s) {
        if (count(s) != data_.size()) throw Error("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
        shape_ = s;
    }

    void fill(T v) { std::ranges::fill(data_, v); }

    bool all_finite() const {
        return std::ranges::all_of(data_, [](T v) { return std::isfinite(v); });
    }

    /// Rows [begin, begin + n) of the batch dimension.
    Tensor slice(std::size_t begin, std::size_t n) const {
        Shape s = shape_;
        s[0] = n;
        const std::size_t k = per_sample();
        return Tensor(s, Storage(data_.begin() + static_cast<std::ptrdiff_t>(begin * k),
                                        data_.begin() + static_cast<std::ptrdiff_t>((begin + n) * k)));
    }

    /// Gathers the given batch rows in order.
    Tensor gather(std::span<const std::size_t> rows) const {
        Shape s = shape_;
        s[0] = rows.size();
        Tensor out(s);
        const std::size_t k = per_sample();
        for (std::size_t i = 0; i < rows.size(); ++i)
            std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(rows[i] * k), k,
                        out.data_.begin() + static_cast<std::ptrdiff_t>(i * k));
        return out;
    }

    template <typename U>
    Tensor<U> cast() const {
        typename Tensor<U>::Storage d(data_.size());
        std::ranges::transform(data_, d.begin(), [](T v) { return static_cast<U>(v); });
        return Tensor<U>(shape_, std::move(d));
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    void check_size() const {
        if (data_.size() != count(shape_)) throw Error("tensor data does not match shape " + shape_str(shape_));
    }

    Shape shape_{0, 0, 0, 0};
    Storage data_;
};

} // namespace modrec::nn
