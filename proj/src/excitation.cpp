#include "spiopt/excitation.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "spiopt/io_util.hpp"

namespace spiopt {

void ExcitationHead::init(ParameterSet& params, Rng& rng) const
{
    if (channels == 0 || reduction == 0) throw std::invalid_argument("excitation head needs channels and reduction >= 1");
    const auto h = hidden();
    params.add(w1(), glorot_uniform({h, channels}, channels, h, rng));
    params.add(b1(), Tensor::zeros({h}));
    params.add(w2(), glorot_uniform({channels, h}, h, channels, rng));
    params.add(b2(), Tensor::zeros({channels}));
}

std::vector<double> squeeze(std::span<const double> y)
{
    if (y.empty()) throw std::invalid_argument("squeeze: measurement vector must hold at least one channel");
    return {y.begin(), y.end()};
}

Var excite(Tape& tape, ParameterSet& params, const ExcitationHead& head, Var descriptor)
{
    const auto& s = descriptor.shape();
    if (s.size() != 2 || s[1] != head.channels)
        throw ShapeError("excite: descriptor " + shape_string(s) + " does not match " + std::to_string(head.channels) +
                         " channels");
    Var h = relu(add_bias(matmul_nt(descriptor, tape.parameter(params, head.w1())), tape.parameter(params, head.b1())));
    return sigmoid(add_bias(matmul_nt(h, tape.parameter(params, head.w2())), tape.parameter(params, head.b2())));
}

Matrix excite_batch(const ParameterSet& params, const ExcitationHead& head, const Matrix& descriptors)
{
    // Inference only; a throwaway copy keeps the tape API single-purpose.
    ParameterSet copy = params.clone_values();
    Tape tape;
    const auto rows = static_cast<std::size_t>(descriptors.rows());
    const auto cols = static_cast<std::size_t>(descriptors.cols());
    Var d = tape.constant(Tensor({rows, cols}, std::vector<double>(descriptors.data(), descriptors.data() + rows * cols)));
    const Tensor& w = excite(tape, copy, head, d).value();
    Matrix out(descriptors.rows(), descriptors.cols());
    std::copy(w.values.begin(), w.values.end(), out.data());
    return out;
}

WeightVector excite(const ParameterSet& params, const ExcitationHead& head, std::span<const double> descriptor)
{
    if (descriptor.size() != head.channels)
        throw ShapeError("excite: descriptor length " + std::to_string(descriptor.size()) + " != " +
                         std::to_string(head.channels));
    Matrix d = Eigen::Map<const Matrix>(descriptor.data(), 1, static_cast<Eigen::Index>(descriptor.size()));
    Matrix w = excite_batch(params, head, d);
    return {std::vector<double>(w.data(), w.data() + w.size())};
}

Var apply_weights(Var y, Var w)
{
    return mul(y, w);
}

std::vector<double> apply_weights(std::span<const double> y, const WeightVector& w)
{
    if (y.size() != w.size())
        throw ShapeError("apply_weights: " + std::to_string(y.size()) + " measurements, " + std::to_string(w.size()) +
                         " weights");
    std::vector<double> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = w.values[i] * y[i];
    return out;
}

WeightVector extract_static_scores(const ParameterSet& params, const ExcitationHead& head, const PatternBank& bank,
                                   const ChannelStats& stats, const Dataset& dataset)
{
    if (dataset.empty()) throw std::invalid_argument("extract_static_scores: empty dataset");
    if (bank.count() != head.channels)
        throw ShapeError("extract_static_scores: bank has " + std::to_string(bank.count()) + " patterns, head expects " +
                         std::to_string(head.channels));
    constexpr std::size_t chunk = 1000;
    std::vector<double> total(head.channels, 0.0);
    for (std::size_t start = 0; start < dataset.size(); start += chunk) {
        const std::size_t n = std::min(chunk, dataset.size() - start);
        Matrix pixels(n, kImagePixels);
        for (std::size_t i = 0; i < n; ++i)
            std::copy(dataset.images[start + i].pixels.begin(), dataset.images[start + i].pixels.end(),
                      pixels.data() + i * kImagePixels);
        const Matrix w = excite_batch(params, head, standardize(measure_batch(bank, pixels), stats));
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (std::size_t c = 0; c < head.channels; ++c) total[c] += w(r, c);
    }
    for (auto& t : total) t /= static_cast<double>(dataset.size());
    return {std::move(total)};
}

std::vector<std::size_t> PatternRanking::ranks() const
{
    std::vector<std::size_t> r(permutation.size());
    for (std::size_t i = 0; i < permutation.size(); ++i) r[permutation[i]] = i;
    return r;
}

PatternRanking rank(std::span<const double> scores)
{
    if (scores.empty()) throw std::invalid_argument("rank: no scores");
    PatternRanking out;
    out.scores.assign(scores.begin(), scores.end());
    out.permutation.resize(scores.size());
    std::iota(out.permutation.begin(), out.permutation.end(), std::size_t{0});
    std::stable_sort(out.permutation.begin(), out.permutation.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return out;
}

std::string ranking_csv(const PatternRanking& ranking)
{
    const auto r = ranking.ranks();
    std::ostringstream out;
    out << "pattern_index,score,rank\n";
    for (std::size_t k = 0; k < ranking.size(); ++k) out << k << ',' << format_double(ranking.scores[k]) << ',' << r[k] + 1 << '\n';
    return out.str();
}

void write_ranking_csv(const std::filesystem::path& path, const PatternRanking& ranking)
{
    write_file_atomic(path, ranking_csv(ranking));
}

}  // namespace spiopt
