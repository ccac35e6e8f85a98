#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "spiopt/autograd.hpp"
#include "spiopt/dataset.hpp"
#include "spiopt/patterns.hpp"

namespace spiopt {

/// Bottleneck over measurement channels: M -> ceil(M/r) (ReLU) -> M (sigmoid).
struct ExcitationHead {
    std::size_t channels = 0;
    std::size_t reduction = 16;
    std::string prefix = "head.";

    std::size_t hidden() const { return (channels + reduction - 1) / reduction; }
    std::string w1() const { return prefix + "fc1.w"; }
    std::string b1() const { return prefix + "fc1.b"; }
    std::string w2() const { return prefix + "fc2.w"; }
    std::string b2() const { return prefix + "fc2.b"; }

    /// Glorot weights, zero biases.
    void init(ParameterSet& params, Rng& rng) const;
};

/// Per-pattern weights, each in (0,1).
struct WeightVector {
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
};

/// Each measurement already is its channel's global descriptor, so this is
/// the identity. Rejects empty input.
std::vector<double> squeeze(std::span<const double> y);

/// [B,M] descriptors to [B,M] weights on the tape.
Var excite(Tape& tape, ParameterSet& params, const ExcitationHead& head, Var descriptor);
WeightVector excite(const ParameterSet& params, const ExcitationHead& head, std::span<const double> descriptor);
/// Row-wise excitation of an N x M matrix.
Matrix excite_batch(const ParameterSet& params, const ExcitationHead& head, const Matrix& descriptors);

Var apply_weights(Var y, Var w);
std::vector<double> apply_weights(std::span<const double> y, const WeightVector& w);

/// Mean excitation output per pattern over `dataset`, using standardized
/// measurements of `bank`.
WeightVector extract_static_scores(const ParameterSet& params, const ExcitationHead& head, const PatternBank& bank,
                                   const ChannelStats& stats, const Dataset& dataset);

struct PatternRanking {
    std::vector<std::size_t> permutation;  // pattern indices, best first
    std::vector<double> scores;

    std::size_t size() const { return permutation.size(); }
    /// Position of pattern k in the ranking (0 = best).
    std::vector<std::size_t> ranks() const;
};

/// Stable descending sort; ties keep the lower index first.
PatternRanking rank(std::span<const double> scores);

/// CSV with columns pattern_index,score,rank (rank is 1-based), one row per
/// pattern in index order.
std::string ranking_csv(const PatternRanking& ranking);
void write_ranking_csv(const std::filesystem::path& path, const PatternRanking& ranking);

}  // namespace spiopt
