#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spiopt/dataset.hpp"
#include "spiopt/decoders.hpp"
#include "spiopt/excitation.hpp"
#include "spiopt/patterns.hpp"

namespace spiopt {

struct TrainConfig {
    Task task = Task::Reconstruct;
    double stage_one_rate = 1.0;  // lambda; the bank holds floor(lambda * 784) patterns
    std::size_t epochs = 20;
    std::size_t fine_tune_epochs = 20;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    double bank_learning_rate = 0.03;
    std::uint64_t seed = 1;
    std::size_t reduction = 16;
    std::size_t channels = 32;  // reconstruction decoder width
    std::size_t hidden = 256;   // classifier width
    double noise_sigma = 0.0;   // Gaussian measurement noise while fitting decoders on binary patterns

    std::size_t patterns() const;
    Decoder decoder(std::size_t inputs) const;
    /// Throws std::invalid_argument on an unusable combination.
    void validate() const;
};

/// floor(rate * n) with a small tolerance for representation error, at least 1.
std::size_t count_for_rate(double rate, std::size_t n);

/// Everything stage one produces.
struct Checkpoint {
    TrainConfig config;
    PatternBank gray;
    PatternBank binary;
    ExcitationHead head;
    ParameterSet head_params;
    ParameterSet decoder_params;
    ChannelStats gray_stats;
    ChannelStats binary_stats;
    PatternRanking ranking;
    std::vector<double> epoch_loss;

    std::size_t patterns() const { return gray.count(); }
    Decoder decoder() const { return config.decoder(patterns()); }
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

/// Stage one: bank, excitation head and decoder trained jointly on gray
/// patterns, then scores, ranking and the dithered bank are derived.
Checkpoint train_joint(const TrainConfig& config, const Dataset& train, const EpochCallback& on_epoch = {});

/// Floyd-Steinberg error diffusion of every pattern (threshold 0.5, row-major
/// scan, weights 7/16 right, 3/16 down-left, 5/16 down, 1/16 down-right).
PatternBank binarize_bank(const PatternBank& gray);
std::vector<double> floyd_steinberg(std::span<const double> values, std::size_t height, std::size_t width);

struct RateSelection {
    double rate = 0.0;  // sampling rate, K / 784
    std::vector<std::size_t> indices;
    std::vector<double> scale;  // static scores of the selected patterns

    std::size_t count() const { return indices.size(); }
};

/// Top floor(rate * M) patterns of the ranking.
RateSelection select_for_rate(const Checkpoint& ckpt, double rate);
/// Top `count` patterns of the ranking.
RateSelection select_top(const Checkpoint& ckpt, std::size_t count);
/// Patterns ranked [start, start + width).
RateSelection weight_band_selection(const Checkpoint& ckpt, std::size_t start, std::size_t width = 20);
/// `width` patterns drawn uniformly without regard to rank.
RateSelection random_selection(const Checkpoint& ckpt, std::uint64_t seed, std::size_t width = 20);

/// A decoder bound to a fixed binary bank and its input transform.
struct RateModel {
    std::string label;
    Decoder decoder;
    ParameterSet params;
    PatternBank bank;
    ChannelStats stats;
    std::vector<double> scale;
    std::vector<double> epoch_loss;

    /// Standardized measurements times the static scale.
    Matrix inputs(const Matrix& measurements) const;
    /// N x 784 reconstructions or N x 10 class probabilities.
    Matrix predict(const Matrix& measurements) const;
};

/// Stage two: frozen binary sub-bank and static scale, decoder fitted for
/// `epochs`. The input layer is rebuilt when K differs from M.
RateModel finetune_decoder(const Checkpoint& ckpt, const RateSelection& selection, const Dataset& train,
                           std::size_t epochs);

/// Decoder trained from scratch on a fixed bank with unit scale.
RateModel train_baseline(const TrainConfig& config, const PatternBank& bank, const Dataset& train, std::size_t epochs,
                         const std::string& label);

// Checkpoint directory layout:
//   checkpoint.bin     tensor container (banks, parameters, stats, scores, ranking, loss log)
//   config.txt         resolved TrainConfig, key=value
//   ranking.csv        pattern_index,score,rank
//   training_log.csv   epoch,loss
//   manifest.json      config hash, seed, version, file list
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);
/// Hash of the checkpoint's tensor container, as recorded in its manifest.
std::string checkpoint_hash(const Checkpoint& ckpt);

// Fine-tuned model directory: model.bin (decoder parameters, selected
// indices, loss log), selection.csv and manifest.json. The bank, statistics
// and scale come from the checkpoint it was tuned from.
void save_rate_model(const RateModel& model, const RateSelection& selection, const Checkpoint& ckpt,
                     const std::filesystem::path& dir);
/// Throws FormatError when `dir` was tuned from a different checkpoint.
RateModel load_rate_model(const Checkpoint& ckpt, const std::filesystem::path& dir, RateSelection* selection = nullptr);

}  // namespace spiopt
