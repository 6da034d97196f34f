#include "bistream/image_io.hpp"

#include <zlib.h>

#include <cctype>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace bistream {

namespace {

// Skips PGM whitespace and '#' comment lines, then parses one decimal.
std::size_t read_pgm_number(std::istream& in, const char* what) {
  int c = in.get();
  while (c != EOF && (std::isspace(c) || c == '#')) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) throw std::invalid_argument(std::string("pgm: malformed ") + what);
  std::size_t value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + static_cast<std::size_t>(c - '0');
    if (value > 1u << 24) throw std::invalid_argument(std::string("pgm: implausible ") + what);
    c = in.get();
  }
  if (c != EOF) in.unget();
  return value;
}

std::uint32_t read_u32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

std::uint8_t paeth(std::uint8_t a, std::uint8_t b, std::uint8_t c) {
  const int p = int(a) + int(b) - int(c);
  const int pa = std::abs(p - int(a)), pb = std::abs(p - int(b)), pc = std::abs(p - int(c));
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

std::vector<std::uint8_t> zlib_inflate(const std::vector<std::uint8_t>& in, std::size_t expected) {
  std::vector<std::uint8_t> out(expected);
  uLongf out_len = static_cast<uLongf>(expected);
  const int rc = uncompress(out.data(), &out_len, in.data(), static_cast<uLong>(in.size()));
  if (rc != Z_OK || out_len != expected) throw std::invalid_argument("png: corrupt compressed stream");
  return out;
}

}  // namespace

GrayImage read_pgm(std::istream& in) {
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5') throw std::invalid_argument("pgm: missing P5 magic");
  GrayImage image;
  image.width = read_pgm_number(in, "width");
  image.height = read_pgm_number(in, "height");
  const std::size_t maxval = read_pgm_number(in, "maxval");
  if (image.width == 0 || image.height == 0) throw std::invalid_argument("pgm: empty raster");
  if (maxval != 255) throw std::invalid_argument("pgm: only maxval 255 is supported, got " + std::to_string(maxval));
  const int sep = in.get();
  if (sep == EOF || !std::isspace(sep)) throw std::invalid_argument("pgm: missing separator before raster");
  image.pixels.resize(image.width * image.height);
  in.read(reinterpret_cast<char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != image.pixels.size()) {
    throw std::invalid_argument("pgm: truncated raster");
  }
  return image;
}

void write_pgm(std::ostream& out, const GrayImage& image) {
  if (image.pixels.size() != image.width * image.height) {
    throw std::invalid_argument("pgm: pixel count does not match extents");
  }
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw std::runtime_error("pgm: write failed");
}

GrayImage read_png_gray8(std::istream& in) {
  static const std::uint8_t signature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::uint8_t head[8];
  in.read(reinterpret_cast<char*>(head), 8);
  if (!in || std::memcmp(head, signature, 8) != 0) throw std::invalid_argument("png: bad signature");

  GrayImage image;
  bool have_header = false, have_end = false;
  std::vector<std::uint8_t> compressed;
  while (!have_end) {
    std::uint8_t chunk_head[8];
    in.read(reinterpret_cast<char*>(chunk_head), 8);
    if (!in) throw std::invalid_argument("png: truncated chunk header");
    const std::uint32_t length = read_u32(chunk_head);
    if (length > (1u << 28)) throw std::invalid_argument("png: implausible chunk length");
    std::vector<std::uint8_t> payload(length);
    in.read(reinterpret_cast<char*>(payload.data()), length);
    std::uint8_t crc_bytes[4];
    in.read(reinterpret_cast<char*>(crc_bytes), 4);
    if (!in) throw std::invalid_argument("png: truncated chunk");

    uLong crc = crc32(0L, chunk_head + 4, 4);
    // zlib resets the crc when handed a null buffer, so skip empty payloads.
    if (length > 0) crc = crc32(crc, payload.data(), length);
    if (static_cast<std::uint32_t>(crc) != read_u32(crc_bytes)) throw std::invalid_argument("png: chunk crc mismatch");

    const std::string type(reinterpret_cast<const char*>(chunk_head + 4), 4);
    if (type == "IHDR") {
      if (length != 13) throw std::invalid_argument("png: malformed IHDR");
      image.width = read_u32(payload.data());
      image.height = read_u32(payload.data() + 4);
      const std::uint8_t bit_depth = payload[8], colour = payload[9], interlace = payload[12];
      if (bit_depth != 8 || colour != 0) {
        throw std::invalid_argument("png: only 8-bit greyscale is supported");
      }
      if (interlace != 0) throw std::invalid_argument("png: interlaced images are not supported");
      if (image.width == 0 || image.height == 0) throw std::invalid_argument("png: empty raster");
      have_header = true;
    } else if (type == "IDAT") {
      compressed.insert(compressed.end(), payload.begin(), payload.end());
    } else if (type == "IEND") {
      have_end = true;
    }
    // Ancillary chunks are ignored.
  }
  if (!have_header || compressed.empty()) throw std::invalid_argument("png: missing IHDR or IDAT");

  const std::size_t stride = image.width + 1;  // one filter byte per row
  const std::vector<std::uint8_t> raw = zlib_inflate(compressed, stride * image.height);

  image.pixels.resize(image.width * image.height);
  for (std::size_t y = 0; y < image.height; ++y) {
    const std::uint8_t filter = raw[y * stride];
    const std::uint8_t* src = raw.data() + y * stride + 1;
    std::uint8_t* dst = image.pixels.data() + y * image.width;
    const std::uint8_t* up = y ? image.pixels.data() + (y - 1) * image.width : nullptr;
    for (std::size_t x = 0; x < image.width; ++x) {
      const std::uint8_t left = x ? dst[x - 1] : 0;
      const std::uint8_t above = up ? up[x] : 0;
      const std::uint8_t corner = (x && up) ? up[x - 1] : 0;
      switch (filter) {
        case 0: dst[x] = src[x]; break;
        case 1: dst[x] = static_cast<std::uint8_t>(src[x] + left); break;
        case 2: dst[x] = static_cast<std::uint8_t>(src[x] + above); break;
        case 3: dst[x] = static_cast<std::uint8_t>(src[x] + (int(left) + int(above)) / 2); break;
        case 4: dst[x] = static_cast<std::uint8_t>(src[x] + paeth(left, above, corner)); break;
        default: throw std::invalid_argument("png: unknown row filter " + std::to_string(filter));
      }
    }
  }
  return image;
}

GrayImage read_gray_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open image " + path.string());
  const int first = in.peek();
  if (first == 'P') return read_pgm(in);
  if (first == 0x89) return read_png_gray8(in);
  throw std::invalid_argument("unsupported image format in " + path.string());
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot create " + path.string());
  write_pgm(out, image);
}

}  // namespace bistream
