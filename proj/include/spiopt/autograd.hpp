#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spiopt/parameters.hpp"
#include "spiopt/tensor.hpp"

namespace spiopt {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape; }
};

enum class GradMode {
    Fresh,       // refuse to run if the parameters already hold unconsumed gradients
    Accumulate,  // add on top of whatever is there
};

/// Computation record for one forward pass.
///
/// Nodes are appended in execution order, so every node's inputs precede it
/// and backward() can replay the list in reverse. A tape is single use:
/// after backward() it only serves reads.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var parameter(ParameterSet& params, const std::string& name);

    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
    const std::string& op_name(Var v) const { return nodes_.at(v.id).op; }
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    /// Gradient of the last backward() loss w.r.t. `v`; zeros if unreachable.
    Tensor grad(Var v) const;

    /// Propagates d(loss)/d(node) through the record and adds the results
    /// into the gradient accumulators of every parameter the tape touched.
    void backward(Var loss, GradMode mode = GradMode::Fresh);

    // Used by primitive implementations.
    Var record(std::string op, Tensor value, const std::vector<Var>& inputs, BackwardFn backward);
    void accumulate(Var v, std::span<const double> g);
    void accumulate(Var v, const Tensor& g) { accumulate(v, g.span()); }

private:
    struct Node {
        std::string op;
        Tensor value;
        Tensor grad;
        BackwardFn backward;
        Parameter* param = nullptr;
        ParameterSet* owner = nullptr;
        bool requires_grad = false;
    };

    Tensor& grad_ref(std::size_t id);

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

// Primitives. All operate on a leading batch axis where one applies.

/// x[B,in] * W[out,in]^T -> [B,out]
Var matmul_nt(Var x, Var w);
/// Adds b[C] along axis 1 of x[B,C,...].
Var add_bias(Var x, Var b);
Var relu(Var x);
Var sigmoid(Var x);
/// Elementwise product of equally shaped tensors.
Var mul(Var a, Var b);
/// x * scale[c] + shift[c] along axis 1 with constant scale/shift.
Var scale_shift(Var x, std::span<const double> scale, std::span<const double> shift);
/// Stride-1 convolution. x[B,Ci,H,W], w[Co,Ci,k,k] -> [B,Co,H+2p-k+1,W+2p-k+1].
Var conv2d(Var x, Var w, std::size_t padding);
/// Transposed convolution. x[B,Ci,H,W], w[Ci,Co,k,k] -> [B,Co,(H-1)s-2p+k,(W-1)s-2p+k].
Var conv_transpose2d(Var x, Var w, std::size_t stride, std::size_t padding);
/// Non-overlapping max pooling with a k x k window. Ties go to the first element.
Var max_pool2d(Var x, std::size_t window);
Var reshape(Var x, Shape shape);
Var sum(Var x);
/// Mean squared error over all elements.
Var mse_loss(Var prediction, Var target);
/// Mean over the batch of -log softmax(logits)[label].
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

/// Row-wise softmax of a [B,C] tensor (no tape).
Tensor softmax(const Tensor& logits);

std::size_t conv_transpose_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);

}  // namespace spiopt
