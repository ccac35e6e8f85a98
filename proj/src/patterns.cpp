#include "spiopt/patterns.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "spiopt/io_util.hpp"
#include "spiopt/rng.hpp"

namespace spiopt {

std::string to_string(PatternDomain d)
{
    return d == PatternDomain::Gray ? "gray" : "binary";
}

std::string to_string(PatternProvenance p)
{
    switch (p) {
    case PatternProvenance::Random:
        return "random";
    case PatternProvenance::Hadamard:
        return "hadamard";
    case PatternProvenance::Learned:
        return "learned";
    case PatternProvenance::LearnedBinarized:
        return "learned-binarized";
    }
    return "unknown";
}

PatternBank::PatternBank(Matrix patterns, PatternDomain domain, PatternProvenance provenance, std::size_t height,
                         std::size_t width)
    : patterns_(std::move(patterns)), domain_(domain), provenance_(provenance), height_(height), width_(width)
{
    if (patterns_.rows() < 1) throw PatternError("pattern bank must hold at least one pattern");
    if (static_cast<std::size_t>(patterns_.cols()) != height_ * width_)
        throw PatternError("pattern bank: " + std::to_string(patterns_.cols()) + " columns for a " +
                           std::to_string(height_) + "x" + std::to_string(width_) + " resolution");
    for (Eigen::Index i = 0; i < patterns_.size(); ++i) {
        const double v = patterns_.data()[i];
        if (domain_ == PatternDomain::Binary && v != 0.0 && v != 1.0)
            throw PatternError("binary pattern bank contains value " + format_double(v));
        if (domain_ == PatternDomain::Gray && !(v >= 0.0 && v <= 1.0))
            throw PatternError("gray pattern bank value " + format_double(v) + " outside [0,1]");
    }
    std::string_view bytes(reinterpret_cast<const char*>(patterns_.data()), patterns_.size() * sizeof(double));
    id_ = fnv1a(bytes, fnv1a(to_string(domain_) + "/" + std::to_string(height_) + "x" + std::to_string(width_)));
}

std::span<const double> PatternBank::row(std::size_t k) const
{
    if (k >= count()) throw std::out_of_range("pattern index " + std::to_string(k) + " out of range");
    return {patterns_.data() + k * resolution(), resolution()};
}

PatternBank PatternBank::select_rows(std::span<const std::size_t> rows) const
{
    Matrix sub(rows.size(), patterns_.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= count()) throw std::out_of_range("select_rows: index " + std::to_string(rows[i]) + " out of range");
        sub.row(i) = patterns_.row(rows[i]);
    }
    return PatternBank(std::move(sub), domain_, provenance_, height_, width_);
}

MeasurementVector measure(const PatternBank& bank, std::span<const double> pixels)
{
    if (pixels.size() != bank.resolution())
        throw PatternError("measure: image has " + std::to_string(pixels.size()) + " pixels, bank expects " +
                           std::to_string(bank.resolution()));
    Eigen::Map<const Vector> x(pixels.data(), static_cast<Eigen::Index>(pixels.size()));
    Vector y = bank.patterns() * x;
    return {std::vector<double>(y.data(), y.data() + y.size()), bank.id()};
}

MeasurementVector measure(const PatternBank& bank, const Image& image)
{
    return measure(bank, std::span<const double>(image.pixels));
}

Matrix measure_batch(const PatternBank& bank, const Matrix& pixels)
{
    if (static_cast<std::size_t>(pixels.cols()) != bank.resolution())
        throw PatternError("measure_batch: images have " + std::to_string(pixels.cols()) + " pixels, bank expects " +
                           std::to_string(bank.resolution()));
    Matrix out(pixels.rows(), bank.count());
    out.noalias() = pixels * bank.patterns().transpose();
    return out;
}

PatternBank random_bank(std::uint64_t seed, std::size_t count)
{
    if (count == 0) throw PatternError("random_bank: count must be positive");
    Rng rng = Rng(seed).split("random-bank");
    Matrix p(count, kImagePixels);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    return PatternBank(std::move(p), PatternDomain::Binary, PatternProvenance::Random);
}

Matrix sylvester_hadamard(std::size_t order)
{
    if (order == 0 || (order & (order - 1)) != 0) throw PatternError("Hadamard order must be a power of two");
    Matrix h(order, order);
    h(0, 0) = 1.0;
    for (std::size_t n = 1; n < order; n *= 2) {
        const auto k = static_cast<Eigen::Index>(n);
        h.block(0, k, k, k) = h.block(0, 0, k, k);
        h.block(k, 0, k, k) = h.block(0, 0, k, k);
        h.block(k, k, k, k) = -h.block(0, 0, k, k);
    }
    return h;
}

std::size_t sign_changes(std::span<const double> row)
{
    std::size_t n = 0;
    for (std::size_t i = 1; i < row.size(); ++i)
        if ((row[i] < 0) != (row[i - 1] < 0)) ++n;
    return n;
}

std::vector<std::size_t> sequency_order(const Matrix& h)
{
    std::vector<std::size_t> changes(h.rows());
    for (Eigen::Index r = 0; r < h.rows(); ++r)
        changes[r] = sign_changes({h.data() + r * h.cols(), static_cast<std::size_t>(h.cols())});
    std::vector<std::size_t> order(h.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return changes[a] < changes[b]; });
    return order;
}

PatternBank hadamard_bank(std::size_t count)
{
    constexpr std::size_t full_side = 32;
    constexpr std::size_t offset = (full_side - kImageSide) / 2;
    if (count == 0 || count > kImagePixels)
        throw PatternError("hadamard_bank: count must be in [1, 784], got " + std::to_string(count));

    const Matrix h = sylvester_hadamard(full_side * full_side);
    const auto order = sequency_order(h);
    Matrix p(count, kImagePixels);
    for (std::size_t k = 0; k < count; ++k)
        for (std::size_t y = 0; y < kImageSide; ++y)
            for (std::size_t x = 0; x < kImageSide; ++x)
                p(k, y * kImageSide + x) = (h(order[k], (y + offset) * full_side + x + offset) + 1.0) / 2.0;
    return PatternBank(std::move(p), PatternDomain::Binary, PatternProvenance::Hadamard);
}

NoiseModel NoiseModel::gaussian(double sigma)
{
    if (!(sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
    return {Kind::AdditiveGaussian, sigma};
}

ChannelStats ChannelStats::select(std::span<const std::size_t> channels) const
{
    ChannelStats out;
    for (std::size_t c : channels) {
        if (c >= size()) throw std::out_of_range("channel " + std::to_string(c) + " out of range");
        out.mean.push_back(mean[c]);
        out.stddev.push_back(stddev[c]);
    }
    return out;
}

std::vector<double> ChannelStats::scale() const
{
    std::vector<double> s(size());
    for (std::size_t c = 0; c < size(); ++c) s[c] = 1.0 / stddev[c];
    return s;
}

std::vector<double> ChannelStats::shift() const
{
    std::vector<double> s(size());
    for (std::size_t c = 0; c < size(); ++c) s[c] = -mean[c] / stddev[c];
    return s;
}

ChannelStats channel_stats(const Matrix& measurements)
{
    if (measurements.rows() < 1) throw std::invalid_argument("channel_stats: no samples");
    const auto n = static_cast<double>(measurements.rows());
    ChannelStats st;
    for (Eigen::Index c = 0; c < measurements.cols(); ++c) {
        const double mean = measurements.col(c).mean();
        const double var = (measurements.col(c).array() - mean).square().sum() / n;
        st.mean.push_back(mean);
        st.stddev.push_back(var > 0.0 ? std::sqrt(var) : 1.0);
    }
    return st;
}

Matrix standardize(const Matrix& measurements, const ChannelStats& stats)
{
    if (static_cast<std::size_t>(measurements.cols()) != stats.size())
        throw std::invalid_argument("standardize: " + std::to_string(measurements.cols()) + " channels, stats for " +
                                    std::to_string(stats.size()));
    const auto scale = stats.scale();
    const auto shift = stats.shift();
    Matrix out(measurements.rows(), measurements.cols());
    for (Eigen::Index n = 0; n < out.rows(); ++n)
        for (Eigen::Index c = 0; c < out.cols(); ++c) out(n, c) = measurements(n, c) * scale[c] + shift[c];
    return out;
}

double measurement_scale(const Matrix& measurements)
{
    if (measurements.rows() < 2) throw std::invalid_argument("measurement_scale: need at least two samples");
    const auto n = static_cast<double>(measurements.rows());
    double total_var = 0.0;
    for (Eigen::Index c = 0; c < measurements.cols(); ++c) {
        const double mean = measurements.col(c).mean();
        total_var += (measurements.col(c).array() - mean).square().sum() / n;
    }
    return std::sqrt(total_var / static_cast<double>(measurements.cols()));
}

std::uint64_t acquisition_seed(std::uint64_t seed, std::size_t index)
{
    return Rng(seed).split("acquisition", index).seed();
}

namespace {

void require_binary(const PatternBank& bank)
{
    if (bank.domain() != PatternDomain::Binary) throw PatternError("physical modulation requires binary patterns");
}

template <typename Row>
void add_noise(Row&& values, const NoiseModel& noise, std::uint64_t seed, double scale)
{
    if (noise.kind == NoiseModel::Kind::None || noise.sigma == 0.0) return;
    if (!(noise.sigma > 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
    Rng rng(seed);
    const double sd = noise.sigma * scale;
    for (Eigen::Index i = 0; i < values.size(); ++i) values[i] += rng.normal(0.0, sd);
}

}  // namespace

MeasurementVector simulate_acquisition(const PatternBank& bank, const Image& image, const NoiseModel& noise,
                                       std::uint64_t seed, double scale)
{
    require_binary(bank);
    auto m = measure(bank, image);
    Eigen::Map<Vector> v(m.values.data(), static_cast<Eigen::Index>(m.values.size()));
    add_noise(v, noise, seed, scale);
    return m;
}

Matrix simulate_acquisition_batch(const PatternBank& bank, const Matrix& pixels, const NoiseModel& noise,
                                  std::uint64_t seed, double scale)
{
    require_binary(bank);
    Matrix out = measure_batch(bank, pixels);
    for (Eigen::Index n = 0; n < out.rows(); ++n) {
        Eigen::Map<Vector> row(out.data() + n * out.cols(), out.cols());
        add_noise(row, noise, acquisition_seed(seed, static_cast<std::size_t>(n)), scale);
    }
    return out;
}

void write_pgm(const std::filesystem::path& path, std::span<const double> values, std::size_t height,
               std::size_t width)
{
    if (values.size() != height * width) throw std::invalid_argument("write_pgm: size mismatch");
    std::ostringstream out;
    out << "P5\n" << width << ' ' << height << "\n255\n";
    for (double v : values) out.put(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    write_file_atomic(path, out.str());
}

std::vector<double> read_pgm(const std::filesystem::path& path, std::size_t height, std::size_t width)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_pgm: cannot open " + path.string());
    auto token = [&] {
        std::string t;
        while (in >> t) {
            if (t[0] != '#') return t;
            std::string rest;
            std::getline(in, rest);
        }
        throw std::runtime_error("read_pgm: truncated header in " + path.string());
    };
    if (token() != "P5") throw std::runtime_error("read_pgm: " + path.string() + " is not a binary PGM");
    const std::size_t w = std::stoul(token()), h = std::stoul(token()), maxval = std::stoul(token());
    if (w != width || h != height)
        throw std::runtime_error("read_pgm: " + path.string() + " is " + std::to_string(w) + "x" + std::to_string(h) +
                                 ", expected " + std::to_string(width) + "x" + std::to_string(height));
    if (maxval == 0 || maxval > 255) throw std::runtime_error("read_pgm: unsupported maxval " + std::to_string(maxval));
    in.get();
    std::vector<double> out(height * width);
    for (auto& v : out) {
        const int c = in.get();
        if (c == EOF) throw std::runtime_error("read_pgm: truncated pixel data in " + path.string());
        v = static_cast<double>(static_cast<unsigned char>(c)) / static_cast<double>(maxval);
    }
    return out;
}

void export_pgm_stack(const PatternBank& bank, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    const int digits = std::max<int>(4, static_cast<int>(std::to_string(bank.count() - 1).size()));
    for (std::size_t k = 0; k < bank.count(); ++k) {
        char name[64];
        std::snprintf(name, sizeof name, "pattern_%0*zu.pgm", digits, k);
        write_pgm(dir / name, bank.row(k), bank.height(), bank.width());
    }
}

}  // namespace spiopt
