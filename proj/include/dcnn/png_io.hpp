#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dcnn {

/// Decoded grayscale image with pixel values normalized to [0, 1]
/// (v / 255 for 8-bit sources, v / 65535 for 16-bit).
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t bit_depth = 8;
  std::vector<float> pixels;  // row-major, height * width
};

/// Reads a non-interlaced grayscale PNG (color type 0, bit depth 8 or 16).
/// Anything else is rejected with a FormatError naming what was found.
GrayImage read_png_gray(const std::string& path);

/// Writes an 8-bit grayscale PNG. Output bytes are deterministic for a
/// given pixel buffer.
void write_png_gray8(const std::string& path, std::size_t width,
                     std::size_t height, std::span<const unsigned char> pixels);

}  // namespace dcnn
