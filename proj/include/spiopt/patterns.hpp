#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spiopt/dataset.hpp"
#include "spiopt/linalg.hpp"

namespace spiopt {

enum class PatternDomain { Gray, Binary };
enum class PatternProvenance { Random, Hadamard, Learned, LearnedBinarized };

std::string to_string(PatternDomain d);
std::string to_string(PatternProvenance p);

class PatternError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An ordered set of modulation patterns, one per row.
///
/// Gray banks hold values in [0,1]; binary banks hold exact 0/1 (DMD mirror
/// off/on). Row order is significant: for ranked banks it is the rank.
class PatternBank {
public:
    PatternBank(Matrix patterns, PatternDomain domain, PatternProvenance provenance, std::size_t height = kImageSide,
                std::size_t width = kImageSide);

    std::size_t count() const { return static_cast<std::size_t>(patterns_.rows()); }
    std::size_t resolution() const { return height_ * width_; }
    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    PatternDomain domain() const { return domain_; }
    PatternProvenance provenance() const { return provenance_; }
    const Matrix& patterns() const { return patterns_; }
    std::span<const double> row(std::size_t k) const;

    /// Content fingerprint; measurements carry it to name their source.
    std::uint64_t id() const { return id_; }

    /// Sub-bank made of the given rows, in the given order.
    PatternBank select_rows(std::span<const std::size_t> rows) const;

private:
    Matrix patterns_;
    PatternDomain domain_;
    PatternProvenance provenance_;
    std::size_t height_, width_;
    std::uint64_t id_;
};

struct MeasurementVector {
    std::vector<double> values;
    std::uint64_t bank_id = 0;

    std::size_t size() const { return values.size(); }
};

/// values[k] = sum_i pattern_k[i] * pixel[i].
MeasurementVector measure(const PatternBank& bank, std::span<const double> pixels);
MeasurementVector measure(const PatternBank& bank, const Image& image);
/// Row n of the result is measure(bank, row n of `pixels`).
Matrix measure_batch(const PatternBank& bank, const Matrix& pixels);

/// i.i.d. Bernoulli(1/2) binary patterns.
PatternBank random_bank(std::uint64_t seed, std::size_t count);

/// Sylvester construction: H_1 = [1], H_2n = [[H, H], [H, -H]]. `order` must be a power of two.
Matrix sylvester_hadamard(std::size_t order);
std::size_t sign_changes(std::span<const double> row);
/// Stable ordering of the rows of `h` by increasing sign-change count.
std::vector<std::size_t> sequency_order(const Matrix& h);

/// First `count` rows (sequency order) of the order-1024 Hadamard matrix,
/// each reshaped to 32x32, cropped to the central 28x28 and mapped to {0,1}.
PatternBank hadamard_bank(std::size_t count);

struct NoiseModel {
    enum class Kind { None, AdditiveGaussian };
    Kind kind = Kind::None;
    double sigma = 0.0;  // in units of the dataset-level measurement scale

    static NoiseModel none() { return {}; }
    static NoiseModel gaussian(double sigma);
};

/// Per-channel mean and standard deviation of measurements over a dataset.
struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> stddev;

    std::size_t size() const { return mean.size(); }
    /// Statistics of the listed channels, in the listed order.
    ChannelStats select(std::span<const std::size_t> channels) const;
    /// Coefficients for (y - mean) / stddev written as y * scale + shift.
    std::vector<double> scale() const;
    std::vector<double> shift() const;
};

/// Population statistics per column of `measurements` (rows are samples).
/// A zero deviation is replaced by 1 so constant channels map to 0.
ChannelStats channel_stats(const Matrix& measurements);
Matrix standardize(const Matrix& measurements, const ChannelStats& stats);

/// Square root of the mean per-channel variance of noiseless measurements
/// (rows are samples). This is the unit that NoiseModel::sigma is expressed in.
double measurement_scale(const Matrix& measurements);

/// Single-pixel detector simulation: measure() plus zero-mean Gaussian noise of
/// standard deviation sigma * scale, deterministic in `seed`. Binary banks only.
MeasurementVector simulate_acquisition(const PatternBank& bank, const Image& image, const NoiseModel& noise,
                                       std::uint64_t seed, double scale);
/// Row n uses the noise stream of simulate_acquisition(..., acquisition_seed(seed, n), ...).
Matrix simulate_acquisition_batch(const PatternBank& bank, const Matrix& pixels, const NoiseModel& noise,
                                  std::uint64_t seed, double scale);
std::uint64_t acquisition_seed(std::uint64_t seed, std::size_t index);

/// 8-bit binary PGM (P5) with levels round(v * 255), v clamped to [0,1].
void write_pgm(const std::filesystem::path& path, std::span<const double> values, std::size_t height,
               std::size_t width);
/// Reads an 8-bit P5 PGM of the given size; levels are divided by maxval.
std::vector<double> read_pgm(const std::filesystem::path& path, std::size_t height, std::size_t width);
/// One PGM per pattern, named pattern_0000.pgm, pattern_0001.pgm, ...
void export_pgm_stack(const PatternBank& bank, const std::filesystem::path& dir);

}  // namespace spiopt
