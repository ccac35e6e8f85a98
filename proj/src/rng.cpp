#include "spiopt/rng.hpp"

#include <algorithm>
#include <numeric>

namespace spiopt {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis)
{
    std::uint64_t h = basis;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Rng::Rng(std::uint64_t seed) : seed_(seed)
{
    reseed(seed, 0);
}

void Rng::reseed(std::uint64_t seed, std::uint64_t salt)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
    engine_.seed(seq);
}

Rng Rng::split(std::string_view tag) const
{
    return split(tag, 0);
}

Rng Rng::split(std::string_view tag, std::uint64_t index) const
{
    std::uint64_t salt = fnv1a(tag);
    salt ^= index + 0x9e3779b97f4a7c15ULL + (salt << 6) + (salt >> 2);
    Rng child(seed_);
    child.reseed(seed_, salt);
    child.seed_ = fnv1a(std::string_view(reinterpret_cast<const char*>(&salt), sizeof salt), seed_);
    return child;
}

std::vector<std::size_t> Rng::permutation(std::size_t n)
{
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    std::shuffle(p.begin(), p.end(), engine_);
    return p;
}

}  // namespace spiopt
