#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spiopt {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Thrown when a primitive receives operands of incompatible shapes.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Thrown when a NaN or Inf shows up in a forward value, gradient or loss.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense row-major array of doubles.
struct Tensor {
    Shape shape;
    std::vector<double> values;

    Tensor() = default;
    explicit Tensor(Shape s);
    Tensor(Shape s, std::vector<double> v);

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor filled(Shape s, double value);
    static Tensor vector(std::vector<double> v);

    std::size_t size() const { return values.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t axis) const { return shape.at(axis); }

    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    std::span<double> span() { return values; }
    std::span<const double> span() const { return values; }

    bool all_finite() const;
    bool operator==(const Tensor&) const = default;
};

}  // namespace spiopt
