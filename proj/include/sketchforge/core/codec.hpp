#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sketchforge/core/image.hpp"

namespace sf {

/// Decodes PNG/JPEG bytes into a unit-range image with 1 or 3 channels
/// (RGB order). Alpha is dropped. Throws IoError on failure.
ImageBuffer decode_image(std::span<const std::uint8_t> bytes);
ImageBuffer read_image(const std::filesystem::path &path);

/// Quantises to 8 bits (round(clamp(v,0,1) * 255)) and encodes lossless PNG.
/// Signed-range images are converted to unit range first.
std::vector<std::uint8_t> encode_png(const ImageBuffer &img);
void write_png(const std::filesystem::path &path, const ImageBuffer &img);

/// The 8-bit value the codec stores for `v` in [0,1].
std::uint8_t quantize8(double v);

} // namespace sf
