#pragma once

// Dense row-major tensor. The leading dimension is the batch for every
// tensor that flows between layers.

#include "bladenet/common.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <new>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace bladenet::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) noexcept {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out + "]";
}

// 64-byte aligned storage keeps Eigen's vectorized summation order
// independent of buffer addresses.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}
    Tensor(Shape shape, const std::vector<T>& values) : shape_(std::move(shape)), values_(values.begin(), values.end()) {
        if (values_.size() != shape_size(shape_))
            throw InputError("tensor: " + std::to_string(values_.size()) + " values for shape " + shape_string(shape_));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return values_.size(); }
    std::size_t batch() const noexcept { return shape_.empty() ? 0 : shape_[0]; }
    std::size_t sample_size() const noexcept { return shape_.empty() || shape_[0] == 0 ? 0 : values_.size() / shape_[0]; }

    T* data() noexcept { return values_.data(); }
    const T* data() const noexcept { return values_.data(); }
    std::span<T> values() noexcept { return values_; }
    std::span<const T> values() const noexcept { return values_; }
    T& operator[](std::size_t i) noexcept { return values_[i]; }
    const T& operator[](std::size_t i) const noexcept { return values_[i]; }

    // Keeps the allocation when the element count does not grow.
    void resize(const Shape& shape) {
        shape_ = shape;
        values_.resize(shape_size(shape_));
    }
    void fill(T v) noexcept { std::fill(values_.begin(), values_.end(), v); }

    bool all_finite() const noexcept {
        return std::all_of(values_.begin(), values_.end(), [](T v) { return std::isfinite(v); });
    }
    void require_finite(const std::string& where) const {
        if (!all_finite()) throw NonFiniteError("non-finite value in " + where);
    }

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    AlignedVector<T> values_;
};

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;

}  // namespace bladenet::nn
