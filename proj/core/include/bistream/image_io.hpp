#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace bistream {

/// 8-bit single-channel raster, rows top to bottom.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, height * width bytes
};

/// Binary PGM (P5) with maxval 255. Header comments are skipped.
GrayImage read_pgm(std::istream& in);
void write_pgm(std::ostream& out, const GrayImage& image);

/// Minimal PNG reader for the masks and maps this project handles:
/// 8-bit greyscale (colour type 0), non-interlaced, any row filter.
GrayImage read_png_gray8(std::istream& in);

/// Dispatches on the magic bytes: "P5" or the PNG signature.
GrayImage read_gray_image(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

}  // namespace bistream
