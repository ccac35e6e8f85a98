#include "spiopt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace spiopt {

std::size_t shape_size(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape)
{
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ',';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

Tensor::Tensor(Shape s) : shape(std::move(s)), values(shape_size(shape), 0.0)
{
    for (auto d : shape)
        if (d == 0) throw ShapeError("tensor: zero-sized dimension in " + shape_string(shape));
}

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v))
{
    if (shape_size(shape) != values.size())
        throw ShapeError("tensor: shape " + shape_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
}

Tensor Tensor::filled(Shape s, double value)
{
    Tensor t(std::move(s));
    std::fill(t.values.begin(), t.values.end(), value);
    return t;
}

Tensor Tensor::vector(std::vector<double> v)
{
    Shape s{v.size()};
    return Tensor(std::move(s), std::move(v));
}

bool Tensor::all_finite() const
{
    return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace spiopt
