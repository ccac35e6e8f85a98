#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "spiopt/rng.hpp"
#include "spiopt/tensor.hpp"

namespace spiopt {

struct Parameter {
    Tensor value;
    Tensor grad;
    Tensor first_moment;
    Tensor second_moment;
};

/// Named trainable tensors with gradient accumulators and Adam state.
///
/// Iteration order is lexicographic by name, which fixes the serialization
/// order and keeps optimizer updates reproducible.
class ParameterSet {
public:
    Parameter& add(const std::string& name, Tensor value);
    void remove(const std::string& name);

    bool contains(const std::string& name) const { return params_.count(name) != 0; }
    Parameter& at(const std::string& name);
    const Parameter& at(const std::string& name) const;
    const Tensor& value(const std::string& name) const { return at(name).value; }
    Tensor& value(const std::string& name) { return at(name).value; }

    std::size_t size() const { return params_.size(); }
    std::size_t scalar_count() const;
    std::vector<std::string> names() const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    std::uint64_t step() const { return step_; }

    // Set by Tape::backward; cleared by zero_grad() and adam_step().
    bool gradients_pending() const { return gradients_pending_; }
    void mark_gradients_pending() { gradients_pending_ = true; }
    void zero_grad();

    /// Copies values only; gradients and optimizer state start fresh.
    ParameterSet clone_values() const;

private:
    friend void adam_step(ParameterSet&, double);

    std::map<std::string, Parameter> params_;
    std::uint64_t step_ = 0;
    bool gradients_pending_ = false;
};

struct AdamConstants {
    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double epsilon = 1e-8;
};

/// One Adam update over every parameter, then clears the gradients.
/// Throws NumericError naming the first parameter with a non-finite gradient.
void adam_step(ParameterSet& params, double learning_rate);

/// Glorot/Xavier uniform: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// Tensor container, little-endian:
//   "SPIOPT1\0"
//   repeated until EOF:
//     u64 name_length, name bytes,
//     u64 rank, rank x u64 dims,
//     product(dims) x f64 values
using TensorMap = std::map<std::string, Tensor>;

inline constexpr char kContainerMagic[8] = {'S', 'P', 'I', 'O', 'P', 'T', '1', '\0'};

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> encode_tensors(const TensorMap& tensors);
TensorMap decode_tensors(const std::vector<std::uint8_t>& bytes);

void save_tensors(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap load_tensors(const std::filesystem::path& path);

/// Values of every parameter, keyed by name with an optional prefix.
TensorMap parameter_values(const ParameterSet& params, const std::string& prefix = "");
/// Rebuilds a ParameterSet from the entries of `tensors` that start with `prefix`.
ParameterSet parameters_from(const TensorMap& tensors, const std::string& prefix = "");

}  // namespace spiopt
