#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <new>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "latentcast/error.hpp"

namespace latentcast::nn {

using Shape = std::vector<std::size_t>;

/// Cache-line aligned storage. Vectorized kernels peel loops up to the first
/// aligned address, so a fixed base alignment keeps results bitwise repeatable.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::size_t alignment = 64;

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) {
        const std::size_t bytes = (n * sizeof(T) + alignment - 1) / alignment * alignment;
        void* p = std::aligned_alloc(alignment, bytes == 0 ? alignment : bytes);
        if (!p) throw std::bad_alloc();
        return static_cast<T*>(p);
    }
    void deallocate(T* p, std::size_t) noexcept { std::free(p); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

/// Dense row-major array with an explicit shape. Dimension 0 is the batch axis
/// wherever a tensor flows through a network.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
    Tensor(Shape shape, const std::vector<T>& values)
        : shape_(std::move(shape)), data_(values.begin(), values.end()) {
        if (data_.size() != shape_size(shape_))
            throw Error(ErrorKind::Shape, "tensor data does not match shape " + shape_string(shape_));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    AlignedVector<T>& storage() noexcept { return data_; }
    const AlignedVector<T>& storage() const noexcept { return data_; }
    void assign(std::span<const T> values) {
        if (values.size() != data_.size()) throw Error(ErrorKind::Shape, "tensor assignment size mismatch");
        std::copy(values.begin(), values.end(), data_.begin());
    }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    void reshape(Shape shape) {
        if (shape_size(shape) != data_.size())
            throw Error(ErrorKind::Shape, "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
        shape_ = std::move(shape);
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        std::copy(data_.begin(), data_.end(), out.data());
        return out;
    }

    friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

private:
    Shape shape_;
    AlignedVector<T> data_;
};

enum class Mode { Train, Eval };

} // namespace latentcast::nn
