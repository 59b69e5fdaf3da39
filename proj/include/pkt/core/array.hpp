#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace pkt {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Dense row-major array of doubles.
///
/// Rank 1 arrays are treated as a single row by the 2-D helpers
/// (rows() == 1, cols() == size()). A scalar is shape {1}.
class Array {
   public:
    Array() = default;
    explicit Array(Shape shape, double fill = 0.0);
    Array(Shape shape, std::vector<double> data);
    Array(std::initializer_list<std::size_t> shape, std::initializer_list<double> data);

    static Array scalar(double v) { return Array({1}, std::vector<double>{v}); }
    static Array zeros_like(const Array& other) { return Array(other.shape_); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t rows() const;
    std::size_t cols() const;

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    double* ptr() { return data_.data(); }
    const double* ptr() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    void fill(double v);
    bool all_finite() const;
    bool same_shape(const Array& other) const { return shape_ == other.shape_; }

    /// Bitwise equality of shape and contents.
    bool bit_equal(const Array& other) const;

   private:
    Shape shape_;
    std::vector<double> data_;
};

double max_abs_diff(const Array& a, const Array& b);

/// Non-owning reference to a named parameter array.
struct NamedArray {
    std::string name;
    Array* value;
};

}  // namespace pkt
