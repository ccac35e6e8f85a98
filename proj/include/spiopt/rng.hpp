#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace spiopt {

/// Seeded generator that can be split into independent child streams.
///
/// Every consumer of randomness (initializers, shuffles, noise) receives its
/// own child obtained with split(tag), so adding a draw in one place never
/// perturbs the sequence seen by another.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }

    Rng split(std::string_view tag) const;
    Rng split(std::string_view tag, std::uint64_t index) const;

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    double normal(double mean, double stddev) { return std::normal_distribution<double>(mean, stddev)(engine_); }
    bool bernoulli(double p) { return std::bernoulli_distribution(p)(engine_); }
    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

    std::vector<std::size_t> permutation(std::size_t n);

    std::mt19937_64& engine() { return engine_; }

private:
    void reseed(std::uint64_t seed, std::uint64_t salt);

    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

/// 64-bit FNV-1a, used for stable fingerprints and stream derivation.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace spiopt
