#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "setgan/image.hpp"

namespace setgan {

// PNG or JPEG (sniffed from the signature). 8-bit samples map to [-1, 1].
ImageGrid decode_image(std::span<const std::uint8_t> bytes);
ImageGrid load_image(const std::filesystem::path& path);

// 8-bit RGB PNG. Encoding is deterministic for identical images.
std::vector<std::uint8_t> encode_png(const ImageGrid& image);
void save_png(const std::filesystem::path& path, const ImageGrid& image);

// Single-channel PNG mask; RGB inputs are converted to gray first.
Mask decode_mask(std::span<const std::uint8_t> bytes);
Mask load_mask(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_mask_png(const Mask& mask);
void save_mask_png(const std::filesystem::path& path, const Mask& mask);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace setgan
