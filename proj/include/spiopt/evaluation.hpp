#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spiopt/pipeline.hpp"

namespace spiopt {

inline constexpr double kPsnrCap = 100.0;

struct PsnrResult {
    double db = 0.0;
    bool identical = false;  // zero error; db is then kPsnrCap
};

/// 10 log10(1 / MSE) with a peak of 1.
PsnrResult psnr(std::span<const double> reference, std::span<const double> reconstruction);

struct AccuracyReport {
    double accuracy = 0.0;
    std::size_t correct = 0;
    std::size_t total = 0;
    std::array<std::size_t, kNumClasses> class_total{};
    std::array<std::size_t, kNumClasses> class_correct{};

    /// NaN for classes absent from the labels.
    double class_accuracy(int c) const;
};

AccuracyReport accuracy(std::span<const int> predictions, std::span<const int> labels);
std::vector<int> argmax_rows(const Matrix& probabilities);

/// Mean PSNR (reconstruction) or accuracy (classification) on a test set.
struct Evaluation {
    Task task = Task::Reconstruct;
    double metric = 0.0;
    std::size_t identical = 0;  // images capped at kPsnrCap
    AccuracyReport classes;     // classification only
    Matrix outputs;             // raw model outputs, one row per test image
};

Evaluation evaluate_outputs(Task task, const Matrix& outputs, const Dataset& test);
/// Noiseless measurement of `test` with the model's bank, then decoding.
Evaluation evaluate(const RateModel& model, const Dataset& test);
/// The same, but measurements come from simulate_acquisition_batch.
Evaluation evaluate_acquired(const RateModel& model, const Dataset& test, const NoiseModel& noise, std::uint64_t seed,
                             double scale);

struct EvalReport {
    Task task = Task::Reconstruct;
    std::string strategy;  // learned | random | hadamard
    double lambda = 1.0;
    std::vector<double> rates;
    std::vector<std::size_t> counts;
    std::vector<double> metric;
    std::vector<AccuracyReport> classes;
    std::size_t n_test = 0;
    std::uint64_t seed = 0;
    double runtime_seconds = 0.0;
};

PatternBank baseline_bank(const std::string& strategy, std::size_t count, std::uint64_t seed);

/// One stage-one checkpoint serves every rate of the learned curve; the
/// baselines train a decoder from scratch per rate for epochs +
/// fine_tune_epochs of the checkpoint's config.
std::vector<EvalReport> sweep_rates(const Checkpoint& ckpt, const std::vector<std::string>& strategies,
                                    const std::vector<double>& rates, const Dataset& train, const Dataset& test);

/// One stage-one run per lambda; each is evaluated at the target sampling
/// rates it can serve (rate <= lambda), K = floor(rate * 784).
std::vector<EvalReport> first_stage_rate_study(const TrainConfig& base, const std::vector<double>& lambdas,
                                               const std::vector<double>& rates, const Dataset& train,
                                               const Dataset& test);

struct BandRow {
    std::string band;  // 1-based rank where the band starts, or "random"
    double rate = 0.0;
    double accuracy = 0.0;
};

struct BandStudy {
    std::vector<BandRow> rows;  // bands in rank order, then the random control
    double top_minus_bottom = 0.0;
};

/// Bands of `width` consecutive ranks from a stage-one checkpoint, each
/// fine-tuned with the same budget, plus a random selection of equal width.
BandStudy weight_band_study(const Checkpoint& ckpt, const Dataset& train, const Dataset& test, std::size_t width = 20);
/// Stage one with `patterns` patterns followed by the band study.
BandStudy weight_band_study(const TrainConfig& config, std::size_t patterns, const Dataset& train, const Dataset& test,
                            std::size_t width = 20);

std::string sweep_csv(const std::vector<EvalReport>& reports);
std::string band_csv(const BandStudy& study);
std::string per_class_csv(const std::vector<EvalReport>& reports);
/// Two-column "rate metric" text, one file per curve.
void write_plot_data(const std::vector<EvalReport>& reports, const std::filesystem::path& dir);

/// Runs tasks 0..n-1, at most SPIOPT_THREADS at a time (default 1).
void run_cells(std::size_t n, const std::function<void(std::size_t)>& cell);

}  // namespace spiopt
