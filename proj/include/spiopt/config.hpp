#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spiopt/pipeline.hpp"

namespace spiopt {

class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string key, const std::string& message)
        : std::invalid_argument(message), key_(std::move(key))
    {
    }
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

/// Line-oriented key=value text. '#' starts a comment; blank lines are
/// ignored; whitespace around keys and values is trimmed.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);

/// Returns false for a key TrainConfig does not own; throws ConfigError
/// for a malformed value.
bool set_train_key(TrainConfig& config, const std::string& key, const std::string& value);
TrainConfig parse_train_config(std::string_view text);
std::string config_text(const TrainConfig& config);
std::uint64_t config_hash(const TrainConfig& config);

struct DataConfig {
    bool synthetic = false;
    std::filesystem::path dataset_dir = "data/mnist";
    std::size_t train_subset = 10000;  // 0 = whole split
    std::size_t test_subset = 1000;
    std::size_t synthetic_train = 2000;
    std::size_t synthetic_test = 500;
};

struct RunConfig {
    TrainConfig train;
    DataConfig data;
    std::vector<double> rates{0.01, 0.02, 0.03, 0.05, 0.1, 0.2, 0.5, 1.0};
    std::vector<double> lambdas{0.1, 0.2, 0.3, 0.5, 1.0};
    std::vector<std::string> strategies{"learned", "random", "hadamard"};
    std::size_t band_patterns = 100;
    std::size_t band_width = 20;
};

/// Every key has a default; unknown keys raise ConfigError naming the key.
RunConfig parse_run_config(std::string_view text);
void set_run_key(RunConfig& config, const std::string& key, const std::string& value);
std::string run_config_text(const RunConfig& config);

struct DataSplits {
    Dataset train;
    Dataset test;
};

/// Synthetic scenes or the MNIST files in data.dataset_dir, cut to the
/// configured subsets. Throws DatasetError when MNIST is missing.
DataSplits load_data(const DataConfig& data, std::uint64_t seed);

}  // namespace spiopt
