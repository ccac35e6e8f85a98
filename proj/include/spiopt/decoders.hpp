#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "spiopt/autograd.hpp"
#include "spiopt/dataset.hpp"
#include "spiopt/linalg.hpp"

namespace spiopt {

enum class Task { Reconstruct, Classify };

std::string to_string(Task t);
Task parse_task(const std::string& s);

/// K -> 7*7*C (ReLU) -> reshape [C,7,7] -> tconv s2 -> [C/2,14,14] (ReLU)
/// -> tconv s2 -> [1,28,28] (sigmoid). Kernels are 4x4 with padding 1.
struct ReconstructionNet {
    std::size_t inputs = 0;
    std::size_t channels = 32;
    std::string prefix = "dec.";

    static constexpr std::size_t kernel = 4;
    static constexpr std::size_t base = 7;

    void init(ParameterSet& params, Rng& rng) const;
    /// Replaces the input layer with a fresh one for this net's width.
    void init_input_layer(ParameterSet& params, Rng& rng) const;
    std::vector<std::string> input_layer() const { return {prefix + "fc1.w", prefix + "fc1.b"}; }
    /// [B,K] -> [B,784]
    Var forward(Tape& tape, ParameterSet& params, Var y) const;
};

/// K -> 256 (ReLU) -> 256 (ReLU) -> 10 logits.
struct ClassifierNet {
    std::size_t inputs = 0;
    std::size_t hidden = 256;
    std::string prefix = "dec.";

    void init(ParameterSet& params, Rng& rng) const;
    void init_input_layer(ParameterSet& params, Rng& rng) const;
    std::vector<std::string> input_layer() const { return {prefix + "fc1.w", prefix + "fc1.b"}; }
    /// [B,K] -> [B,10] logits
    Var forward(Tape& tape, ParameterSet& params, Var y) const;
};

/// Either decoder, selected by task.
struct Decoder {
    Task task = Task::Reconstruct;
    std::size_t inputs = 0;
    std::size_t channels = 32;
    std::size_t hidden = 256;

    ReconstructionNet reconstruction() const { return {inputs, channels}; }
    ClassifierNet classifier() const { return {inputs, hidden}; }

    void init(ParameterSet& params, Rng& rng) const;
    void init_input_layer(ParameterSet& params, Rng& rng) const;
    Var forward(Tape& tape, ParameterSet& params, Var y) const;
    /// MSE against pixels for reconstruction, cross-entropy for classification.
    Var loss(Var output, const Matrix& pixels, std::span<const int> labels) const;

    /// Inference on an N x K matrix: N x 784 images or N x 10 probabilities.
    Matrix run(const ParameterSet& params, const Matrix& inputs) const;
};

/// Row n: reconstructed image n.
Matrix decode_images(const ReconstructionNet& net, const ParameterSet& params, const Matrix& y);
/// Row n: class probabilities for sample n.
Matrix classify(const ClassifierNet& net, const ParameterSet& params, const Matrix& y);

/// Scalar loss values without a tape.
double mse(std::span<const double> prediction, std::span<const double> target);
double cross_entropy(std::span<const double> probabilities, int label);

/// One 28x28 PGM per row of `images`, named recon_0000.pgm, ...
void export_reconstructions(const Matrix& images, const std::filesystem::path& dir);

}  // namespace spiopt
