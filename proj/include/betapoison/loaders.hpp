#pragma once

// MNIST IDX and CIFAR-10 binary readers.
//
// IDX images:  u32 magic 0x00000803, u32 count, u32 rows, u32 cols, then
//              count*rows*cols pixels (row-major, one byte each).
// IDX labels:  u32 magic 0x00000801, u32 count, then count label bytes.
// All header integers are big-endian.
//
// CIFAR-10:    back-to-back 3073-byte records, one label byte (0..9) followed
//              by 1024 red, 1024 green and 1024 blue bytes.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>

#include "betapoison/dataset.hpp"

namespace betapoison {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::size_t kCifarPixels = 3072;
inline constexpr std::size_t kCifarRecord = kCifarPixels + 1;

/// Reads an IDX image/label pair; pixels are scaled by 1/255 into [0,1].
Dataset load_idx(const std::filesystem::path& image_path, const std::filesystem::path& label_path);

/// Looks for the conventional MNIST file names inside `dir`.
Dataset load_idx_dir(const std::filesystem::path& dir);

/// Concatenates CIFAR-10 binary batches; ids run across files in order.
Dataset load_cifar10(std::span<const std::filesystem::path> paths);

/// Reads data_batch_1.bin .. data_batch_5.bin, whichever exist.
Dataset load_cifar10_dir(const std::filesystem::path& dir);

} // namespace betapoison
