#include "spiopt/dataset.hpp"

#include <zlib.h>

#include <cmath>
#include <memory>

#include "spiopt/rng.hpp"

namespace spiopt {

namespace {

constexpr std::uint32_t kImageMagic = 2051;
constexpr std::uint32_t kLabelMagic = 2049;

// gzread passes plain files through untouched, so one reader covers both.
std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path)) throw DatasetError("dataset file not found: " + path.string());
    std::unique_ptr<gzFile_s, decltype(&gzclose)> f(gzopen(path.c_str(), "rb"), &gzclose);
    if (!f) throw DatasetError("cannot open " + path.string());
    std::vector<std::uint8_t> out;
    std::array<std::uint8_t, 1 << 16> buf;
    for (;;) {
        const int n = gzread(f.get(), buf.data(), static_cast<unsigned>(buf.size()));
        if (n < 0) throw DatasetError("read error (corrupt gzip?) in " + path.string());
        if (n == 0) break;
        out.insert(out.end(), buf.begin(), buf.begin() + n);
    }
    return out;
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off)
{
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

std::filesystem::path find_variant(const std::filesystem::path& dir, const std::string& stem)
{
    for (const auto& name : {stem, stem + ".gz"}) {
        auto p = dir / name;
        if (std::filesystem::exists(p)) return p;
    }
    return {};
}

std::pair<std::string, std::string> stems(Split split)
{
    if (split == Split::Train) return {"train-images-idx3-ubyte", "train-labels-idx1-ubyte"};
    return {"t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"};
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path, Split split)
{
    const auto img = read_maybe_gzip(images_path);
    const auto lab = read_maybe_gzip(labels_path);

    if (img.size() < 16) throw DatasetError(images_path.string() + ": truncated header");
    if (be32(img, 0) != kImageMagic)
        throw DatasetError(images_path.string() + ": bad magic " + std::to_string(be32(img, 0)) + " (expected 2051)");
    if (lab.size() < 8) throw DatasetError(labels_path.string() + ": truncated header");
    if (be32(lab, 0) != kLabelMagic)
        throw DatasetError(labels_path.string() + ": bad magic " + std::to_string(be32(lab, 0)) + " (expected 2049)");

    const std::size_t count = be32(img, 4), rows = be32(img, 8), cols = be32(img, 12);
    const std::size_t label_count = be32(lab, 4);
    if (rows != kImageSide || cols != kImageSide)
        throw DatasetError(images_path.string() + ": images are " + std::to_string(rows) + "x" + std::to_string(cols) +
                           ", expected 28x28");
    if (count != label_count)
        throw DatasetError("image count " + std::to_string(count) + " does not match label count " +
                           std::to_string(label_count));
    if (img.size() < 16 + count * kImagePixels) throw DatasetError(images_path.string() + ": truncated pixel data");
    if (lab.size() < 8 + count) throw DatasetError(labels_path.string() + ": truncated label data");

    Dataset d;
    d.split = split;
    d.images.resize(count);
    for (std::size_t n = 0; n < count; ++n) {
        Image& im = d.images[n];
        const std::uint8_t* px = img.data() + 16 + n * kImagePixels;
        for (std::size_t i = 0; i < kImagePixels; ++i) im.pixels[i] = px[i] / 255.0;
        const int label = lab[8 + n];
        if (label >= kNumClasses) throw DatasetError(labels_path.string() + ": label out of range at " + std::to_string(n));
        im.label = label;
    }
    return d;
}

bool mnist_available(const std::filesystem::path& dir, Split split)
{
    const auto [images, labels] = stems(split);
    return !find_variant(dir, images).empty() && !find_variant(dir, labels).empty();
}

Dataset load_mnist(const std::filesystem::path& dir, Split split)
{
    const auto [images, labels] = stems(split);
    const auto ip = find_variant(dir, images);
    const auto lp = find_variant(dir, labels);
    if (ip.empty() || lp.empty())
        throw DatasetError("MNIST files " + images + " / " + labels + " not found in " + dir.string());
    return load_idx(ip, lp, split);
}

Dataset synthetic_dataset(std::uint64_t seed, std::size_t count, Split split)
{
    Rng rng = Rng(seed).split(split == Split::Train ? "synthetic-train" : "synthetic-test");
    Dataset d;
    d.split = split;
    d.images.resize(count);
    for (auto& im : d.images) {
        std::size_t x0, y0, w, h;
        // Centres exactly on the midline have no quadrant; redraw those.
        do {
            w = 4 + rng.index(9);
            h = 4 + rng.index(9);
            x0 = rng.index(kImageSide - w + 1);
            y0 = rng.index(kImageSide - h + 1);
        } while (2 * x0 + w == kImageSide || 2 * y0 + h == kImageSide);
        const double brightness = rng.uniform(0.6, 1.0);
        for (std::size_t y = y0; y < y0 + h; ++y)
            for (std::size_t x = x0; x < x0 + w; ++x) im.pixels[y * kImageSide + x] = brightness;
        const bool right = 2 * x0 + w > kImageSide;
        const bool bottom = 2 * y0 + h > kImageSide;
        im.label = (bottom ? 2 : 0) + (right ? 1 : 0);
    }
    return d;
}

Dataset head(const Dataset& d, std::size_t count)
{
    if (count == 0 || count >= d.size()) return d;
    Dataset out;
    out.split = d.split;
    out.images.assign(d.images.begin(), d.images.begin() + static_cast<std::ptrdiff_t>(count));
    return out;
}

std::array<std::uint8_t, kImagePixels> quantize(const Image& image)
{
    std::array<std::uint8_t, kImagePixels> out;
    for (std::size_t i = 0; i < kImagePixels; ++i)
        out[i] = static_cast<std::uint8_t>(std::lround(image.pixels[i] * 255.0));
    return out;
}

Matrix pixel_matrix(const Dataset& d)
{
    Matrix m(d.size(), kImagePixels);
    for (std::size_t n = 0; n < d.size(); ++n)
        for (std::size_t i = 0; i < kImagePixels; ++i) m(n, i) = d.images[n].pixels[i];
    return m;
}

std::vector<int> labels_of(const Dataset& d)
{
    std::vector<int> out;
    out.reserve(d.size());
    for (const auto& im : d.images) {
        if (!im.label) throw DatasetError("image without label in a labelled context");
        out.push_back(*im.label);
    }
    return out;
}

}  // namespace spiopt
