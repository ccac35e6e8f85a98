#include "spiopt/decoders.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "spiopt/patterns.hpp"

namespace spiopt {

namespace {

void add_dense(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng)
{
    params.add(name + ".w", glorot_uniform({out, in}, in, out, rng));
    params.add(name + ".b", Tensor::zeros({out}));
}

void replace_dense(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng)
{
    if (params.contains(name + ".w")) params.remove(name + ".w");
    if (params.contains(name + ".b")) params.remove(name + ".b");
    add_dense(params, name, in, out, rng);
}

Var dense(Tape& tape, ParameterSet& params, const std::string& name, Var x)
{
    return add_bias(matmul_nt(x, tape.parameter(params, name + ".w")), tape.parameter(params, name + ".b"));
}

void require_inputs(const char* what, std::size_t expected, Var y)
{
    const auto& s = y.shape();
    if (s.size() != 2 || s[1] != expected)
        throw ShapeError(std::string(what) + ": input " + shape_string(s) + " does not match width " +
                         std::to_string(expected));
}

Tensor to_tensor(const Matrix& m)
{
    return Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                  std::vector<double>(m.data(), m.data() + m.size()));
}

Matrix to_matrix(const Tensor& t, std::size_t rows)
{
    const auto cols = t.size() / rows;
    Matrix m(rows, cols);
    std::copy(t.values.begin(), t.values.end(), m.data());
    return m;
}

}  // namespace

std::string to_string(Task t)
{
    return t == Task::Reconstruct ? "reconstruct" : "classify";
}

Task parse_task(const std::string& s)
{
    if (s == "reconstruct") return Task::Reconstruct;
    if (s == "classify") return Task::Classify;
    throw std::invalid_argument("unknown task '" + s + "' (expected reconstruct or classify)");
}

void ReconstructionNet::init(ParameterSet& params, Rng& rng) const
{
    if (channels < 2 || channels % 2) throw std::invalid_argument("reconstruction channels must be even");
    add_dense(params, prefix + "fc1", inputs, base * base * channels, rng);
    const std::size_t half = channels / 2;
    params.add(prefix + "up1.w", glorot_uniform({channels, half, kernel, kernel}, channels * kernel * kernel,
                                                half * kernel * kernel, rng));
    params.add(prefix + "up1.b", Tensor::zeros({half}));
    params.add(prefix + "up2.w", glorot_uniform({half, 1, kernel, kernel}, half * kernel * kernel, kernel * kernel, rng));
    params.add(prefix + "up2.b", Tensor::zeros({1}));
}

void ReconstructionNet::init_input_layer(ParameterSet& params, Rng& rng) const
{
    replace_dense(params, prefix + "fc1", inputs, base * base * channels, rng);
}

Var ReconstructionNet::forward(Tape& tape, ParameterSet& params, Var y) const
{
    require_inputs("reconstruction net", inputs, y);
    const std::size_t batch = y.shape()[0];
    Var h = relu(dense(tape, params, prefix + "fc1", y));
    h = reshape(h, {batch, channels, base, base});
    h = relu(add_bias(conv_transpose2d(h, tape.parameter(params, prefix + "up1.w"), 2, 1),
                      tape.parameter(params, prefix + "up1.b")));
    h = sigmoid(add_bias(conv_transpose2d(h, tape.parameter(params, prefix + "up2.w"), 2, 1),
                         tape.parameter(params, prefix + "up2.b")));
    return reshape(h, {batch, kImagePixels});
}

void ClassifierNet::init(ParameterSet& params, Rng& rng) const
{
    add_dense(params, prefix + "fc1", inputs, hidden, rng);
    add_dense(params, prefix + "fc2", hidden, hidden, rng);
    add_dense(params, prefix + "fc3", hidden, kNumClasses, rng);
}

void ClassifierNet::init_input_layer(ParameterSet& params, Rng& rng) const
{
    replace_dense(params, prefix + "fc1", inputs, hidden, rng);
}

Var ClassifierNet::forward(Tape& tape, ParameterSet& params, Var y) const
{
    require_inputs("classifier net", inputs, y);
    Var h = relu(dense(tape, params, prefix + "fc1", y));
    h = relu(dense(tape, params, prefix + "fc2", h));
    return dense(tape, params, prefix + "fc3", h);
}

void Decoder::init(ParameterSet& params, Rng& rng) const
{
    if (task == Task::Reconstruct)
        reconstruction().init(params, rng);
    else
        classifier().init(params, rng);
}

void Decoder::init_input_layer(ParameterSet& params, Rng& rng) const
{
    if (task == Task::Reconstruct)
        reconstruction().init_input_layer(params, rng);
    else
        classifier().init_input_layer(params, rng);
}

Var Decoder::forward(Tape& tape, ParameterSet& params, Var y) const
{
    return task == Task::Reconstruct ? reconstruction().forward(tape, params, y) : classifier().forward(tape, params, y);
}

Var Decoder::loss(Var output, const Matrix& pixels, std::span<const int> labels) const
{
    if (task == Task::Reconstruct) return mse_loss(output, output.tape->constant(to_tensor(pixels)));
    return softmax_cross_entropy(output, labels);
}

Matrix Decoder::run(const ParameterSet& params, const Matrix& y) const
{
    constexpr Eigen::Index chunk = 500;
    Matrix result(y.rows(), task == Task::Reconstruct ? kImagePixels : kNumClasses);
    ParameterSet copy = params.clone_values();
    for (Eigen::Index start = 0; start < y.rows(); start += chunk) {
        const Eigen::Index n = std::min(chunk, y.rows() - start);
        Tape tape;
        const Tensor& out = forward(tape, copy, tape.constant(to_tensor(y.middleRows(start, n)))).value();
        result.middleRows(start, n) =
            to_matrix(task == Task::Reconstruct ? out : softmax(out), static_cast<std::size_t>(n));
    }
    return result;
}

Matrix decode_images(const ReconstructionNet& net, const ParameterSet& params, const Matrix& y)
{
    return Decoder{Task::Reconstruct, net.inputs, net.channels}.run(params, y);
}

Matrix classify(const ClassifierNet& net, const ParameterSet& params, const Matrix& y)
{
    Decoder d{Task::Classify, net.inputs};
    d.hidden = net.hidden;
    return d.run(params, y);
}

double mse(std::span<const double> prediction, std::span<const double> target)
{
    if (prediction.size() != target.size() || prediction.empty())
        throw ShapeError("mse: sizes " + std::to_string(prediction.size()) + " and " + std::to_string(target.size()));
    double acc = 0.0;
    for (std::size_t i = 0; i < prediction.size(); ++i) acc += (prediction[i] - target[i]) * (prediction[i] - target[i]);
    return acc / static_cast<double>(prediction.size());
}

double cross_entropy(std::span<const double> probabilities, int label)
{
    if (label < 0 || static_cast<std::size_t>(label) >= probabilities.size())
        throw std::out_of_range("cross_entropy: label out of range");
    return -std::log(probabilities[label]);
}

void export_reconstructions(const Matrix& images, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    for (Eigen::Index n = 0; n < images.rows(); ++n) {
        char name[64];
        std::snprintf(name, sizeof name, "recon_%04ld.pgm", static_cast<long>(n));
        write_pgm(dir / name, {images.data() + n * images.cols(), static_cast<std::size_t>(images.cols())}, kImageSide,
                  kImageSide);
    }
}

}  // namespace spiopt
