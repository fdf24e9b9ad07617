#include "ptsr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace ptsr {

std::string shape_str(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_)) {
        throw ShapeError(fmt::format("tensor data size {} does not match shape {}",
                                     data_.size(), shape_str(shape_)));
    }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> values) {
    return Tensor({rows, cols}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw ShapeError(fmt::format("axis {} out of range for shape {}", axis,
                                     shape_str(shape_)));
    }
    return shape_[axis];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        throw ShapeError(fmt::format("cannot reshape {} to {}", shape_str(shape_),
                                     shape_str(shape)));
    }
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
}

Image make_image(std::size_t height, std::size_t width, double fill,
                 std::size_t channels) {
    return Tensor({height, width, channels}, fill);
}

void require_image(const Tensor& t, const char* what, std::size_t channels) {
    if (t.rank() != 3 || t.shape()[2] != channels) {
        throw ShapeError(fmt::format("{} must be HxWx{}, got {}", what, channels,
                                     shape_str(t.shape())));
    }
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(fmt::format("shape mismatch {} vs {}", shape_str(a.shape()),
                                     shape_str(b.shape())));
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace ptsr
