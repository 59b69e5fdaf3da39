#include "pkt/core/array.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "pkt/core/errors.hpp"

namespace pkt {

std::string shape_str(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Array::Array(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    if (shape_.empty()) throw ShapeError("array shape must have at least one dimension");
}

Array::Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.empty()) throw ShapeError("array shape must have at least one dimension");
    if (data_.size() != shape_size(shape_)) {
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_str(shape_));
    }
}

Array::Array(std::initializer_list<std::size_t> shape, std::initializer_list<double> data)
    : Array(Shape(shape), std::vector<double>(data)) {}

std::size_t Array::rows() const { return shape_.size() == 1 ? 1 : shape_[0]; }

std::size_t Array::cols() const {
    if (shape_.size() == 1) return shape_[0];
    return shape_[0] == 0 ? 0 : data_.size() / shape_[0];
}

void Array::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Array::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool Array::bit_equal(const Array& other) const {
    return shape_ == other.shape_ &&
           (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

double max_abs_diff(const Array& a, const Array& b) {
    if (!a.same_shape(b)) throw ShapeError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace pkt
