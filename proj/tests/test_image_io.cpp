#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "bistream/image_io.hpp"

using namespace bistream;

namespace {

// 8x5 grey PNG with pixel(y, x) = (y*37 + x*11 + 7) % 256, one row per
// filter type 0..4. Produced by an external encoder and cross-checked
// against a reference decoder before being frozen here.
constexpr unsigned char kPngFixture[] = {
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d,
    0x49, 0x48, 0x44, 0x52, 0x00, 0x00, 0x00, 0x08, 0x00, 0x00, 0x00, 0x05,
    0x08, 0x00, 0x00, 0x00, 0x00, 0x5d, 0xfa, 0xf2, 0x89, 0x00, 0x00, 0x00,
    0x21, 0x49, 0x44, 0x41, 0x54, 0x78, 0xda, 0x63, 0x60, 0x17, 0x92, 0xd5,
    0x30, 0xb6, 0xf3, 0x0c, 0x61, 0xd4, 0xe1, 0x86, 0x00, 0x26, 0x55, 0x28,
    0x60, 0xf6, 0x93, 0x80, 0x00, 0x16, 0x55, 0xa8, 0x14, 0x00, 0x72, 0x16,
    0x04, 0x80, 0x4b, 0x13, 0x6a, 0x98, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45,
    0x4e, 0x44, 0xae, 0x42, 0x60, 0x82,
};
constexpr std::size_t kIdatPayloadOffset = 41;

std::string fixture_string() {
  return {reinterpret_cast<const char*>(kPngFixture), sizeof kPngFixture};
}

GrayImage ramp_image(std::size_t w, std::size_t h) {
  GrayImage image{w, h, std::vector<std::uint8_t>(w * h)};
  for (std::size_t i = 0; i < image.pixels.size(); ++i) image.pixels[i] = static_cast<std::uint8_t>((i * 7) % 256);
  return image;
}

}  // namespace

TEST_CASE("pgm round-trips exactly") {
  const GrayImage image = ramp_image(6, 4);
  std::stringstream io;
  write_pgm(io, image);
  const GrayImage back = read_pgm(io);
  CHECK(back.width == image.width);
  CHECK(back.height == image.height);
  CHECK(back.pixels == image.pixels);
}

TEST_CASE("pgm header parsing") {
  std::stringstream with_comment("P5\n# a comment\n2 #inline\n1\n255\n\xab\xcd");
  const GrayImage image = read_pgm(with_comment);
  CHECK(image.width == 2);
  CHECK(image.height == 1);
  CHECK(image.pixels[0] == 0xab);
  CHECK(image.pixels[1] == 0xcd);

  std::stringstream p2("P2\n2 2\n255\n0 0 0 0\n");
  CHECK_THROWS_AS(read_pgm(p2), std::invalid_argument);
  std::stringstream wide("P5\n2 1\n65535\n\0\0\0\0");
  CHECK_THROWS_AS(read_pgm(wide), std::invalid_argument);
  std::stringstream truncated("P5\n4 4\n255\nxy");
  CHECK_THROWS_AS(read_pgm(truncated), std::invalid_argument);
}

TEST_CASE("png fixture decodes across all row filters") {
  std::stringstream in(fixture_string());
  const GrayImage image = read_png_gray8(in);
  REQUIRE(image.width == 8);
  REQUIRE(image.height == 5);
  for (std::size_t y = 0; y < 5; ++y) {
    for (std::size_t x = 0; x < 8; ++x) {
      CHECK(image.pixels[y * 8 + x] == static_cast<std::uint8_t>((y * 37 + x * 11 + 7) % 256));
    }
  }
}

TEST_CASE("png rejects corruption") {
  std::string bad_crc = fixture_string();
  bad_crc[kIdatPayloadOffset] ^= 0x01;
  std::stringstream in(bad_crc);
  CHECK_THROWS_AS(read_png_gray8(in), std::invalid_argument);

  std::string bad_signature = fixture_string();
  bad_signature[0] = 'X';
  std::stringstream in2(bad_signature);
  CHECK_THROWS_AS(read_png_gray8(in2), std::invalid_argument);

  std::string truncated = fixture_string().substr(0, 30);
  std::stringstream in3(truncated);
  CHECK_THROWS_AS(read_png_gray8(in3), std::invalid_argument);
}

TEST_CASE("grey image dispatch picks the decoder by magic bytes") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "bistream_io_test";
  fs::create_directories(dir);

  const fs::path png_path = dir / "fixture.png";
  std::ofstream(png_path, std::ios::binary) << fixture_string();
  const GrayImage from_png = read_gray_image(png_path);
  CHECK(from_png.width == 8);
  CHECK(from_png.pixels[0] == 7);

  const fs::path pgm_path = dir / "ramp.pgm";
  const GrayImage image = ramp_image(3, 2);
  write_pgm(pgm_path, image);
  const GrayImage from_pgm = read_gray_image(pgm_path);
  CHECK(from_pgm.pixels == image.pixels);

  const fs::path junk_path = dir / "junk.bin";
  std::ofstream(junk_path, std::ios::binary) << "not an image";
  CHECK_THROWS_AS(read_gray_image(junk_path), std::invalid_argument);
  CHECK_THROWS_AS(read_gray_image(dir / "missing.png"), std::invalid_argument);

  fs::remove_all(dir);
}
