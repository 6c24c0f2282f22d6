#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "birdfcn/error.hpp"

namespace birdfcn::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ')';
    return os.str();
}

/// Dense row-major array with an optional gradient buffer of identical shape.
///
/// Feature maps use channel-first layout: a rank-3 tensor is (channels, height, width).
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
        check_extents();
        data_.assign(shape_size(shape_), fill);
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_extents();
        if (shape_size(shape_) != data_.size()) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string(shape_));
        }
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    std::vector<T>& values() noexcept { return data_; }
    const std::vector<T>& values() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    bool has_grad() const noexcept { return grad_.has_value(); }

    /// Allocates a zero gradient on first use.
    std::span<T> grad() {
        if (!grad_) {
            grad_.emplace(data_.size(), T{0});
        }
        return *grad_;
    }
    std::span<const T> grad() const {
        if (!grad_) {
            throw GraphError("gradient requested before it was populated");
        }
        return *grad_;
    }

    void zero_grad() {
        if (grad_) {
            std::fill(grad_->begin(), grad_->end(), T{0});
        }
    }
    void clear_grad() noexcept { grad_.reset(); }

    /// Same shape, values converted; gradient dropped.
    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

private:
    void check_extents() const {
        for (std::size_t extent : shape_) {
            if (extent == 0) {
                throw ShapeError("tensor extents must be positive, got " + shape_string(shape_));
            }
        }
    }

    Shape shape_;
    std::vector<T> data_;
    std::optional<std::vector<T>> grad_;
};

}  // namespace birdfcn::nn
