#include "betapoison/loaders.hpp"

#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "betapoison/error.hpp"

namespace betapoison {

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(fmt::format("cannot open {}", path.string()));
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (is.bad()) throw IoError(fmt::format("failed reading {}", path.string()));
    return bytes;
}

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

} // namespace

Dataset load_idx(const std::filesystem::path& image_path, const std::filesystem::path& label_path) {
    const auto images = read_bytes(image_path);
    const auto labels = read_bytes(label_path);

    if (images.size() < 16) throw FormatError(fmt::format("{}: truncated IDX image header", image_path.string()));
    if (labels.size() < 8) throw FormatError(fmt::format("{}: truncated IDX label header", label_path.string()));
    if (auto m = read_be32(images, 0); m != kIdxImageMagic) {
        throw FormatError(fmt::format("{}: bad image magic 0x{:08x}", image_path.string(), m));
    }
    if (auto m = read_be32(labels, 0); m != kIdxLabelMagic) {
        throw FormatError(fmt::format("{}: bad label magic 0x{:08x}", label_path.string(), m));
    }

    const std::size_t n_images = read_be32(images, 4);
    const std::size_t rows = read_be32(images, 8);
    const std::size_t cols = read_be32(images, 12);
    const std::size_t n_labels = read_be32(labels, 4);
    if (n_images != n_labels) {
        throw ConsistencyError(fmt::format("{} images but {} labels", n_images, n_labels));
    }
    const std::size_t dim = rows * cols;
    if (images.size() != 16 + n_images * dim) {
        throw ConsistencyError(fmt::format("{}: header announces {} bytes of pixels, file holds {}",
                                           image_path.string(), n_images * dim, images.size() - 16));
    }
    if (labels.size() != 8 + n_labels) {
        throw ConsistencyError(fmt::format("{}: header announces {} labels, file holds {}", label_path.string(),
                                           n_labels, labels.size() - 8));
    }

    std::vector<LabeledSample> samples(n_images);
    for (std::size_t i = 0; i < n_images; ++i) {
        auto& s = samples[i];
        s.id = i;
        s.label = labels[8 + i];
        s.features.resize(dim);
        const std::uint8_t* px = images.data() + 16 + i * dim;
        for (std::size_t j = 0; j < dim; ++j) s.features[j] = px[j] / 255.0;
    }
    return Dataset(dim, std::move(samples));
}

Dataset load_idx_dir(const std::filesystem::path& dir) {
    for (auto [img, lbl] : {std::pair{"train-images-idx3-ubyte", "train-labels-idx1-ubyte"},
                            std::pair{"train-images.idx3-ubyte", "train-labels.idx1-ubyte"},
                            std::pair{"images-idx3-ubyte", "labels-idx1-ubyte"}}) {
        if (std::filesystem::exists(dir / img) && std::filesystem::exists(dir / lbl)) {
            return load_idx(dir / img, dir / lbl);
        }
    }
    throw IoError(fmt::format("{}: no IDX image/label pair found", dir.string()));
}

Dataset load_cifar10(std::span<const std::filesystem::path> paths) {
    std::vector<LabeledSample> samples;
    for (const auto& path : paths) {
        const auto bytes = read_bytes(path);
        if (bytes.size() % kCifarRecord != 0) {
            throw FormatError(fmt::format("{}: {} bytes is not a multiple of {}", path.string(), bytes.size(),
                                          kCifarRecord));
        }
        const std::size_t n = bytes.size() / kCifarRecord;
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint8_t* rec = bytes.data() + i * kCifarRecord;
            if (rec[0] > 9) {
                throw ConsistencyError(fmt::format("{}: record {} has label {}", path.string(), i, int{rec[0]}));
            }
            LabeledSample s;
            s.id = samples.size();
            s.label = rec[0];
            s.features.resize(kCifarPixels);
            for (std::size_t j = 0; j < kCifarPixels; ++j) s.features[j] = rec[1 + j] / 255.0;
            samples.push_back(std::move(s));
        }
    }
    return Dataset(kCifarPixels, std::move(samples));
}

Dataset load_cifar10_dir(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> paths;
    for (int b = 1; b <= 5; ++b) {
        auto p = dir / fmt::format("data_batch_{}.bin", b);
        if (std::filesystem::exists(p)) paths.push_back(p);
    }
    if (paths.empty()) throw IoError(fmt::format("{}: no data_batch_*.bin files", dir.string()));
    return load_cifar10(paths);
}

} // namespace betapoison
