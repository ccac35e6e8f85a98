#include "spiopt/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <set>
#include <stdexcept>

namespace spiopt {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

[[noreturn]] void shape_mismatch(const std::string& op, const Shape& a, const Shape& b, const std::string& what = "")
{
    std::string msg = op + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b);
    if (!what.empty()) msg += " (" + what + ")";
    throw ShapeError(msg);
}

void require_rank(const std::string& op, const Shape& s, std::size_t rank)
{
    if (s.size() != rank)
        throw ShapeError(op + ": expected rank " + std::to_string(rank) + " input, got " + shape_string(s));
}

// Patch layout shared by conv2d and conv_transpose2d. The "image" is the
// spatial map that patches are cut from (conv input, or transposed-conv
// output); the "grid" enumerates patch positions.
struct PatchGeometry {
    std::size_t channels, img_h, img_w, kernel, stride, pad, grid_h, grid_w;

    std::size_t rows() const { return channels * kernel * kernel; }
    std::size_t cols() const { return grid_h * grid_w; }
};

void im2col(const double* img, const PatchGeometry& g, double* cols)
{
    const auto ncols = g.cols();
    for (std::size_t c = 0; c < g.channels; ++c)
        for (std::size_t ki = 0; ki < g.kernel; ++ki)
            for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                double* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * ncols;
                for (std::size_t gy = 0; gy < g.grid_h; ++gy) {
                    const auto iy = static_cast<std::ptrdiff_t>(gy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
                    for (std::size_t gx = 0; gx < g.grid_w; ++gx) {
                        const auto ix =
                            static_cast<std::ptrdiff_t>(gx * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
                        const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.img_h) &&
                                            ix < static_cast<std::ptrdiff_t>(g.img_w);
                        row[gy * g.grid_w + gx] = inside ? img[(c * g.img_h + iy) * g.img_w + ix] : 0.0;
                    }
                }
            }
}

// Adjoint of im2col: scatter-adds patch columns back into the image.
void col2im(const double* cols, const PatchGeometry& g, double* img)
{
    const auto ncols = g.cols();
    for (std::size_t c = 0; c < g.channels; ++c)
        for (std::size_t ki = 0; ki < g.kernel; ++ki)
            for (std::size_t kj = 0; kj < g.kernel; ++kj) {
                const double* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * ncols;
                for (std::size_t gy = 0; gy < g.grid_h; ++gy) {
                    const auto iy = static_cast<std::ptrdiff_t>(gy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.img_h)) continue;
                    for (std::size_t gx = 0; gx < g.grid_w; ++gx) {
                        const auto ix =
                            static_cast<std::ptrdiff_t>(gx * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.img_w)) continue;
                        img[(c * g.img_h + iy) * g.img_w + ix] += row[gy * g.grid_w + gx];
                    }
                }
            }
}

// Splits a rank-2+ shape into (axis0, axis1, product of the rest).
std::array<std::size_t, 3> channel_layout(const Shape& s)
{
    std::size_t inner = 1;
    for (std::size_t i = 2; i < s.size(); ++i) inner *= s[i];
    return {s[0], s[1], inner};
}

}  // namespace

const Tensor& Var::value() const
{
    return tape->value(*this);
}

Var Tape::constant(Tensor value)
{
    if (!value.all_finite()) throw NumericError("constant: non-finite input");
    Node n;
    n.op = "constant";
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Var Tape::parameter(ParameterSet& params, const std::string& name)
{
    Parameter& p = params.at(name);
    Node n;
    n.op = "parameter:" + name;
    n.value = p.value;
    n.param = &p;
    n.owner = &params;
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Var Tape::record(std::string op, Tensor value, const std::vector<Var>& inputs, BackwardFn backward)
{
    if (!value.all_finite()) throw NumericError(op + ": produced non-finite values");
    bool needs = false;
    for (const auto& in : inputs) {
        if (in.tape != this) throw std::logic_error(op + ": input recorded on a different tape");
        needs = needs || nodes_.at(in.id).requires_grad;
    }
    Node n;
    n.op = std::move(op);
    n.value = std::move(value);
    n.requires_grad = needs;
    if (needs) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Tensor& Tape::grad_ref(std::size_t id)
{
    Node& n = nodes_.at(id);
    if (n.grad.values.empty()) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
}

void Tape::accumulate(Var v, std::span<const double> g)
{
    if (!nodes_.at(v.id).requires_grad) return;
    Tensor& dst = grad_ref(v.id);
    if (dst.size() != g.size()) throw std::logic_error("accumulate: gradient size mismatch at " + nodes_[v.id].op);
    for (std::size_t i = 0; i < g.size(); ++i) dst.values[i] += g[i];
}

Tensor Tape::grad(Var v) const
{
    const Node& n = nodes_.at(v.id);
    if (n.grad.values.empty()) return Tensor::zeros(n.value.shape);
    return n.grad;
}

void Tape::backward(Var loss, GradMode mode)
{
    if (consumed_) throw std::logic_error("backward: tape already consumed; record a new forward pass");
    if (loss.tape != this) throw std::logic_error("backward: loss belongs to another tape");
    if (nodes_.empty()) throw std::logic_error("backward: empty computation record");
    if (value(loss).size() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_string(value(loss).shape));

    std::set<ParameterSet*> owners;
    for (const auto& n : nodes_)
        if (n.owner) owners.insert(n.owner);
    if (mode == GradMode::Fresh)
        for (auto* o : owners)
            if (o->gradients_pending())
                throw std::logic_error("backward: parameter gradients already populated; call zero_grad() or "
                                       "use GradMode::Accumulate");

    consumed_ = true;
    grad_ref(loss.id).values[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || n.grad.values.empty() || !n.backward) continue;
        n.backward(*this, n.grad);
    }
    for (auto& n : nodes_) {
        if (!n.param || n.grad.values.empty()) continue;
        if (!n.grad.all_finite()) throw NumericError("backward: non-finite gradient for " + n.op);
        auto& dst = n.param->grad.values;
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += n.grad.values[j];
    }
    for (auto* o : owners) o->mark_gradients_pending();
}

Var matmul_nt(Var x, Var w)
{
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    require_rank("matmul", xs, 2);
    require_rank("matmul", ws, 2);
    if (xs[1] != ws[1]) shape_mismatch("matmul", xs, ws, "inner dimensions differ");
    const auto batch = xs[0], in = xs[1], out = ws[0];

    Tensor y({batch, out});
    MatrixMap(y.values.data(), batch, out).noalias() =
        ConstMatrixMap(x.value().values.data(), batch, in) * ConstMatrixMap(w.value().values.data(), out, in).transpose();

    return x.tape->record("matmul", std::move(y), {x, w}, [x, w, batch, in, out](Tape& t, const Tensor& g) {
        ConstMatrixMap dy(g.values.data(), batch, out);
        if (t.requires_grad(x)) {
            Tensor dx({batch, in});
            MatrixMap(dx.values.data(), batch, in).noalias() = dy * ConstMatrixMap(t.value(w).values.data(), out, in);
            t.accumulate(x, dx);
        }
        if (t.requires_grad(w)) {
            Tensor dw({out, in});
            MatrixMap(dw.values.data(), out, in).noalias() =
                dy.transpose() * ConstMatrixMap(t.value(x).values.data(), batch, in);
            t.accumulate(w, dw);
        }
    });
}

Var add_bias(Var x, Var b)
{
    const auto& xs = x.shape();
    if (xs.size() < 2) throw ShapeError("add_bias: input must have rank >= 2, got " + shape_string(xs));
    if (b.shape().size() != 1 || b.shape()[0] != xs[1]) shape_mismatch("add_bias", xs, b.shape(), "bias length != axis 1");
    const auto [batch, channels, inner] = channel_layout(xs);

    Tensor y = x.value();
    const auto& bv = b.value().values;
    for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t c = 0; c < channels; ++c) {
            double* p = y.values.data() + (n * channels + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) p[i] += bv[c];
        }

    return x.tape->record("add_bias", std::move(y), {x, b},
                          [x, b, batch = batch, channels = channels, inner = inner](Tape& t, const Tensor& g) {
                              t.accumulate(x, g);
                              if (!t.requires_grad(b)) return;
                              std::vector<double> db(channels, 0.0);
                              for (std::size_t n = 0; n < batch; ++n)
                                  for (std::size_t c = 0; c < channels; ++c) {
                                      const double* p = g.values.data() + (n * channels + c) * inner;
                                      for (std::size_t i = 0; i < inner; ++i) db[c] += p[i];
                                  }
                              t.accumulate(b, db);
                          });
}

Var relu(Var x)
{
    Tensor y = x.value();
    for (auto& v : y.values) v = v > 0.0 ? v : 0.0;
    return x.tape->record("relu", std::move(y), {x}, [x](Tape& t, const Tensor& g) {
        const auto& xv = t.value(x).values;
        std::vector<double> dx(g.size());
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = xv[i] > 0.0 ? g.values[i] : 0.0;
        t.accumulate(x, dx);
    });
}

Var sigmoid(Var x)
{
    Tensor y = x.value();
    for (auto& v : y.values) v = 1.0 / (1.0 + std::exp(-v));
    Tape* tape = x.tape;
    const std::size_t out_id = tape->size();
    return tape->record("sigmoid", std::move(y), {x}, [x, out_id](Tape& t, const Tensor& g) {
        const auto& s = t.value(Var{&t, out_id}).values;
        std::vector<double> dx(g.size());
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = g.values[i] * s[i] * (1.0 - s[i]);
        t.accumulate(x, dx);
    });
}

Var mul(Var a, Var b)
{
    if (a.shape() != b.shape()) shape_mismatch("mul", a.shape(), b.shape());
    Tensor y = a.value();
    const auto& bv = b.value().values;
    for (std::size_t i = 0; i < y.size(); ++i) y.values[i] *= bv[i];
    return a.tape->record("mul", std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
        const auto& av = t.value(a).values;
        const auto& bv = t.value(b).values;
        std::vector<double> d(g.size());
        if (t.requires_grad(a)) {
            for (std::size_t i = 0; i < d.size(); ++i) d[i] = g.values[i] * bv[i];
            t.accumulate(a, d);
        }
        if (t.requires_grad(b)) {
            for (std::size_t i = 0; i < d.size(); ++i) d[i] = g.values[i] * av[i];
            t.accumulate(b, d);
        }
    });
}

Var scale_shift(Var x, std::span<const double> scale, std::span<const double> shift)
{
    const auto& xs = x.shape();
    if (xs.size() < 2) throw ShapeError("scale_shift: input must have rank >= 2, got " + shape_string(xs));
    if (scale.size() != xs[1] || shift.size() != xs[1])
        shape_mismatch("scale_shift", xs, Shape{scale.size(), shift.size()}, "scale/shift length != axis 1");
    const auto [batch, channels, inner] = channel_layout(xs);

    Tensor y = x.value();
    for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t c = 0; c < channels; ++c) {
            double* p = y.values.data() + (n * channels + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) p[i] = p[i] * scale[c] + shift[c];
        }

    std::vector<double> s(scale.begin(), scale.end());
    return x.tape->record("scale_shift", std::move(y), {x},
                          [x, s = std::move(s), batch = batch, channels = channels, inner = inner](Tape& t,
                                                                                                  const Tensor& g) {
                              std::vector<double> dx(g.size());
                              for (std::size_t n = 0; n < batch; ++n)
                                  for (std::size_t c = 0; c < channels; ++c) {
                                      const std::size_t off = (n * channels + c) * inner;
                                      for (std::size_t i = 0; i < inner; ++i) dx[off + i] = g.values[off + i] * s[c];
                                  }
                              t.accumulate(x, dx);
                          });
}

Var conv2d(Var x, Var w, std::size_t padding)
{
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    require_rank("conv2d", xs, 4);
    require_rank("conv2d", ws, 4);
    if (ws[1] != xs[1]) shape_mismatch("conv2d", xs, ws, "input channels differ");
    if (ws[2] != ws[3]) throw ShapeError("conv2d: kernel must be square, got " + shape_string(ws));
    const std::size_t k = ws[2];
    if (xs[2] + 2 * padding < k || xs[3] + 2 * padding < k) shape_mismatch("conv2d", xs, ws, "kernel larger than input");

    const std::size_t batch = xs[0], cin = xs[1], cout = ws[0];
    const PatchGeometry geo{cin, xs[2], xs[3], k, 1, padding, xs[2] + 2 * padding - k + 1, xs[3] + 2 * padding - k + 1};
    const std::size_t img_size = cin * xs[2] * xs[3];
    const std::size_t out_size = cout * geo.cols();

    Tensor y({batch, cout, geo.grid_h, geo.grid_w});
    std::vector<double> cols(geo.rows() * geo.cols());
    ConstMatrixMap wm(w.value().values.data(), cout, geo.rows());
    for (std::size_t n = 0; n < batch; ++n) {
        im2col(x.value().values.data() + n * img_size, geo, cols.data());
        MatrixMap(y.values.data() + n * out_size, cout, geo.cols()).noalias() =
            wm * ConstMatrixMap(cols.data(), geo.rows(), geo.cols());
    }

    return x.tape->record("conv2d", std::move(y), {x, w}, [=](Tape& t, const Tensor& g) {
        std::vector<double> cols(geo.rows() * geo.cols());
        std::vector<double> dcols(cols.size());
        Tensor dx(t.value(x).shape);
        Tensor dw(t.value(w).shape);
        ConstMatrixMap wm(t.value(w).values.data(), cout, geo.rows());
        MatrixMap dwm(dw.values.data(), cout, geo.rows());
        for (std::size_t n = 0; n < batch; ++n) {
            ConstMatrixMap dy(g.values.data() + n * out_size, cout, geo.cols());
            if (t.requires_grad(w)) {
                im2col(t.value(x).values.data() + n * img_size, geo, cols.data());
                dwm.noalias() += dy * ConstMatrixMap(cols.data(), geo.rows(), geo.cols()).transpose();
            }
            if (t.requires_grad(x)) {
                MatrixMap(dcols.data(), geo.rows(), geo.cols()).noalias() = wm.transpose() * dy;
                col2im(dcols.data(), geo, dx.values.data() + n * img_size);
            }
        }
        t.accumulate(x, dx);
        t.accumulate(w, dw);
    });
}

std::size_t conv_transpose_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding)
{
    const auto full = (in - 1) * stride + kernel;
    if (full <= 2 * padding) throw ShapeError("conv_transpose2d: padding too large for input/kernel");
    return full - 2 * padding;
}

Var conv_transpose2d(Var x, Var w, std::size_t stride, std::size_t padding)
{
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    require_rank("conv_transpose2d", xs, 4);
    require_rank("conv_transpose2d", ws, 4);
    if (ws[0] != xs[1]) shape_mismatch("conv_transpose2d", xs, ws, "input channels differ");
    if (ws[2] != ws[3]) throw ShapeError("conv_transpose2d: kernel must be square, got " + shape_string(ws));
    if (stride == 0) throw ShapeError("conv_transpose2d: stride must be positive");
    const std::size_t k = ws[2];
    const std::size_t batch = xs[0], cin = xs[1], cout = ws[1];
    const std::size_t out_h = conv_transpose_output_size(xs[2], k, stride, padding);
    const std::size_t out_w = conv_transpose_output_size(xs[3], k, stride, padding);
    const PatchGeometry geo{cout, out_h, out_w, k, stride, padding, xs[2], xs[3]};
    const std::size_t in_size = cin * geo.cols();
    const std::size_t out_size = cout * out_h * out_w;

    Tensor y({batch, cout, out_h, out_w});
    std::vector<double> cols(geo.rows() * geo.cols());
    ConstMatrixMap wm(w.value().values.data(), cin, geo.rows());
    for (std::size_t n = 0; n < batch; ++n) {
        MatrixMap(cols.data(), geo.rows(), geo.cols()).noalias() =
            wm.transpose() * ConstMatrixMap(x.value().values.data() + n * in_size, cin, geo.cols());
        col2im(cols.data(), geo, y.values.data() + n * out_size);
    }

    return x.tape->record("conv_transpose2d", std::move(y), {x, w}, [=](Tape& t, const Tensor& g) {
        std::vector<double> dcols(geo.rows() * geo.cols());
        Tensor dx(t.value(x).shape);
        Tensor dw(t.value(w).shape);
        ConstMatrixMap wm(t.value(w).values.data(), cin, geo.rows());
        MatrixMap dwm(dw.values.data(), cin, geo.rows());
        for (std::size_t n = 0; n < batch; ++n) {
            im2col(g.values.data() + n * out_size, geo, dcols.data());
            ConstMatrixMap dc(dcols.data(), geo.rows(), geo.cols());
            if (t.requires_grad(x))
                MatrixMap(dx.values.data() + n * in_size, cin, geo.cols()).noalias() = wm * dc;
            if (t.requires_grad(w))
                dwm.noalias() += ConstMatrixMap(t.value(x).values.data() + n * in_size, cin, geo.cols()) * dc.transpose();
        }
        t.accumulate(x, dx);
        t.accumulate(w, dw);
    });
}

Var max_pool2d(Var x, std::size_t window)
{
    const auto& xs = x.shape();
    require_rank("max_pool2d", xs, 4);
    if (window == 0 || xs[2] % window || xs[3] % window)
        throw ShapeError("max_pool2d: window " + std::to_string(window) + " does not tile input " + shape_string(xs));
    const std::size_t planes = xs[0] * xs[1], h = xs[2], wd = xs[3];
    const std::size_t oh = h / window, ow = wd / window;

    Tensor y({xs[0], xs[1], oh, ow});
    auto argmax = std::make_shared<std::vector<std::size_t>>(y.size());
    const auto& xv = x.value().values;
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                std::size_t best = p * h * wd + oy * window * wd + ox * window;
                for (std::size_t dy = 0; dy < window; ++dy)
                    for (std::size_t dx = 0; dx < window; ++dx) {
                        const std::size_t idx = p * h * wd + (oy * window + dy) * wd + ox * window + dx;
                        if (xv[idx] > xv[best]) best = idx;
                    }
                const std::size_t o = (p * oh + oy) * ow + ox;
                y.values[o] = xv[best];
                (*argmax)[o] = best;
            }

    return x.tape->record("max_pool2d", std::move(y), {x}, [x, argmax](Tape& t, const Tensor& g) {
        std::vector<double> dx(t.value(x).size(), 0.0);
        for (std::size_t o = 0; o < g.size(); ++o) dx[(*argmax)[o]] += g.values[o];
        t.accumulate(x, dx);
    });
}

Var reshape(Var x, Shape shape)
{
    if (shape_size(shape) != x.value().size()) shape_mismatch("reshape", x.shape(), shape, "element counts differ");
    Tensor y(std::move(shape), x.value().values);
    return x.tape->record("reshape", std::move(y), {x}, [x](Tape& t, const Tensor& g) { t.accumulate(x, g); });
}

Var sum(Var x)
{
    double s = 0.0;
    for (double v : x.value().values) s += v;
    return x.tape->record("sum", Tensor({1}, {s}), {x}, [x](Tape& t, const Tensor& g) {
        std::vector<double> dx(t.value(x).size(), g.values[0]);
        t.accumulate(x, dx);
    });
}

Var mse_loss(Var prediction, Var target)
{
    if (prediction.shape() != target.shape()) shape_mismatch("mse_loss", prediction.shape(), target.shape());
    const auto& p = prediction.value().values;
    const auto& q = target.value().values;
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += (p[i] - q[i]) * (p[i] - q[i]);
    const double n = static_cast<double>(p.size());
    return prediction.tape->record(
        "mse_loss", Tensor({1}, {acc / n}), {prediction, target}, [prediction, target, n](Tape& t, const Tensor& g) {
            const auto& p = t.value(prediction).values;
            const auto& q = t.value(target).values;
            std::vector<double> d(p.size());
            for (std::size_t i = 0; i < d.size(); ++i) d[i] = g.values[0] * 2.0 * (p[i] - q[i]) / n;
            t.accumulate(prediction, d);
            if (t.requires_grad(target)) {
                for (auto& v : d) v = -v;
                t.accumulate(target, d);
            }
        });
}

Tensor softmax(const Tensor& logits)
{
    require_rank("softmax", logits.shape, 2);
    const std::size_t rows = logits.shape[0], cols = logits.shape[1];
    Tensor out(logits.shape);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* z = logits.values.data() + r * cols;
        double* p = out.values.data() + r * cols;
        const double mx = *std::max_element(z, z + cols);
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) total += (p[c] = std::exp(z[c] - mx));
        for (std::size_t c = 0; c < cols; ++c) p[c] /= total;
    }
    return out;
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels)
{
    const auto& ls = logits.shape();
    require_rank("softmax_cross_entropy", ls, 2);
    if (labels.size() != ls[0])
        shape_mismatch("softmax_cross_entropy", ls, Shape{labels.size()}, "one label per row required");
    const std::size_t rows = ls[0], cols = ls[1];
    for (int l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= cols)
            throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(l) + " outside [0," +
                                    std::to_string(cols) + ")");

    Tensor probs = softmax(logits.value());
    double loss = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* z = logits.value().values.data() + r * cols;
        const double mx = *std::max_element(z, z + cols);
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) total += std::exp(z[c] - mx);
        loss += std::log(total) + mx - z[labels[r]];
    }
    loss /= static_cast<double>(rows);

    std::vector<int> lab(labels.begin(), labels.end());
    return logits.tape->record("softmax_cross_entropy", Tensor({1}, {loss}), {logits},
                               [logits, probs = std::move(probs), lab = std::move(lab), rows, cols](Tape& t,
                                                                                                    const Tensor& g) {
                                   std::vector<double> d = probs.values;
                                   for (std::size_t r = 0; r < rows; ++r) d[r * cols + lab[r]] -= 1.0;
                                   const double s = g.values[0] / static_cast<double>(rows);
                                   for (auto& v : d) v *= s;
                                   t.accumulate(logits, d);
                               });
}

}  // namespace spiopt
