#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spiopt/linalg.hpp"

namespace spiopt {

inline constexpr std::size_t kImageSide = 28;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;
inline constexpr int kNumClasses = 10;

/// A 28x28 scene with pixels in [0,1], row-major.
struct Image {
    std::array<double, kImagePixels> pixels{};
    std::optional<int> label;
};

enum class Split { Train, Test };

struct Dataset {
    Split split = Split::Train;
    std::vector<Image> images;

    std::size_t size() const { return images.size(); }
    bool empty() const { return images.empty(); }
};

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reads an IDX image file (magic 2051) and its label file (magic 2049).
/// Either file may be gzip-compressed. Pixels are divided by 255.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 Split split = Split::Train);

/// Loads a split from a directory using the conventional MNIST file names
/// (train-images-idx3-ubyte, t10k-labels-idx1-ubyte, ... with or without .gz).
Dataset load_mnist(const std::filesystem::path& dir, Split split);

/// Whether `dir` holds both files of `split` under a conventional name.
bool mnist_available(const std::filesystem::path& dir, Split split);

/// Deterministic toy scenes: one bright axis-aligned rectangle on a dark
/// background, labelled by the quadrant (0..3) holding its centre.
Dataset synthetic_dataset(std::uint64_t seed, std::size_t count, Split split = Split::Train);

/// First `count` images (all of them when count is 0 or exceeds the size).
Dataset head(const Dataset& d, std::size_t count);

/// Inverse of the /255 normalization.
std::array<std::uint8_t, kImagePixels> quantize(const Image& image);

/// N x 784 matrix of pixels, one image per row.
Matrix pixel_matrix(const Dataset& d);
std::vector<int> labels_of(const Dataset& d);

}  // namespace spiopt
