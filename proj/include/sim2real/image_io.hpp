#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sim2real/digest.hpp"

namespace sim2real {

enum class ImageFormat { png, jpeg, unknown };

std::string to_string(ImageFormat f);

struct ImageInfo {
  int width = 0;
  int height = 0;
  ImageFormat format = ImageFormat::unknown;
};

// Interleaved 8-bit pixels; channels is 1 (gray), 3 (RGB) or 4 (RGBA).
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

ImageFormat sniff_format(std::span<const std::uint8_t> bytes);

// Reads dimensions from the header only. Throws DecodeError.
ImageInfo probe_image(std::span<const std::uint8_t> bytes);

// Full decode of PNG or JPEG. PNG output keeps gray/RGB/RGBA layout.
Image8 decode_image(std::span<const std::uint8_t> bytes);

Bytes encode_png(const Image8& image);

// PNG input is returned untouched; anything else is decoded and re-encoded
// losslessly as PNG.
Bytes ensure_png(std::span<const std::uint8_t> bytes);

// Single-channel 8-bit index map (label image). Palette, 16-bit and
// multi-channel files are rejected because their values are not indices.
struct IndexImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;
};

IndexImage decode_index_png(std::span<const std::uint8_t> bytes);
Bytes encode_index_png(const IndexImage& image);

}  // namespace sim2real
