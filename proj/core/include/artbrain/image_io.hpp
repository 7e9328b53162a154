#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "artbrain/preprocess.hpp"

namespace artbrain {

enum class ImageFormat { png, jpeg, unknown };

ImageFormat sniff_format(std::span<const std::byte> bytes) noexcept;

/// Decodes PNG or JPEG into 8-bit RGB (gray and palette images are expanded, alpha dropped).
/// Throws FormatError on anything else or on corrupt data.
RgbImage decode_image(std::span<const std::byte> bytes);
RgbImage read_image(const std::filesystem::path &path);

std::vector<std::byte> encode_png(const RgbImage &image);
/// Baseline JPEG without chroma subsampling.
std::vector<std::byte> encode_jpeg(const RgbImage &image, int quality = 95);
/// Chooses PNG or JPEG from the extension.
void write_image(const std::filesystem::path &path, const RgbImage &image, int jpeg_quality = 95);

std::vector<std::byte> read_file(const std::filesystem::path &path);
void write_file(const std::filesystem::path &path, std::span<const std::byte> bytes);

}  // namespace artbrain
