#include "dcnn/png_io.hpp"

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>

#include "dcnn/errors.hpp"

namespace dcnn {

namespace {

constexpr unsigned char kSignature[8] = {0x89, 'P', 'N', 'G',
                                         '\r', '\n', 0x1a, '\n'};

std::uint32_t read_u32_be(const unsigned char* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) |
         (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) |
         static_cast<std::uint32_t>(p[3]);
}

void put_u32_be(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

void append_chunk(std::vector<unsigned char>& out, const char type[4],
                  std::span<const unsigned char> data) {
  put_u32_be(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, out.data() + type_at, static_cast<uInt>(4 + data.size()));
  put_u32_be(out, static_cast<std::uint32_t>(crc));
}

int paeth_predict(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

// Per-scanline PNG filter reversal, bpp bytes per pixel.
void unfilter(std::vector<unsigned char>& raw, std::size_t height,
              std::size_t row_bytes, std::size_t bpp,
              std::vector<unsigned char>& out) {
  out.resize(height * row_bytes);
  for (std::size_t y = 0; y < height; ++y) {
    const unsigned char filter = raw[y * (row_bytes + 1)];
    const unsigned char* src = raw.data() + y * (row_bytes + 1) + 1;
    unsigned char* dst = out.data() + y * row_bytes;
    const unsigned char* prev = y ? out.data() + (y - 1) * row_bytes : nullptr;
    switch (filter) {
      case 0:
        std::memcpy(dst, src, row_bytes);
        break;
      case 1:
        for (std::size_t x = 0; x < row_bytes; ++x) {
          const int a = x >= bpp ? dst[x - bpp] : 0;
          dst[x] = static_cast<unsigned char>(src[x] + a);
        }
        break;
      case 2:
        for (std::size_t x = 0; x < row_bytes; ++x) {
          const int b = prev ? prev[x] : 0;
          dst[x] = static_cast<unsigned char>(src[x] + b);
        }
        break;
      case 3:
        for (std::size_t x = 0; x < row_bytes; ++x) {
          const int a = x >= bpp ? dst[x - bpp] : 0;
          const int b = prev ? prev[x] : 0;
          dst[x] = static_cast<unsigned char>(src[x] + (a + b) / 2);
        }
        break;
      case 4:
        for (std::size_t x = 0; x < row_bytes; ++x) {
          const int a = x >= bpp ? dst[x - bpp] : 0;
          const int b = prev ? prev[x] : 0;
          const int c = (prev && x >= bpp) ? prev[x - bpp] : 0;
          dst[x] = static_cast<unsigned char>(src[x] + paeth_predict(a, b, c));
        }
        break;
      default:
        throw FormatError("png: unknown filter type " +
                          std::to_string(filter));
    }
  }
}

}  // namespace

GrayImage read_png_gray(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0)
    throw FormatError("png: bad signature: " + path);

  GrayImage img;
  bool saw_ihdr = false, saw_iend = false;
  std::vector<unsigned char> idat;
  std::size_t pos = 8;
  while (pos + 8 <= bytes.size() && !saw_iend) {
    const std::uint32_t len = read_u32_be(bytes.data() + pos);
    if (pos + 12 + len > bytes.size())
      throw FormatError("png: truncated chunk: " + path);
    const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
    const unsigned char* data = bytes.data() + pos + 8;

    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, bytes.data() + pos + 4, 4 + len);
    if (static_cast<std::uint32_t>(crc) != read_u32_be(data + len))
      throw FormatError("png: chunk CRC mismatch: " + path);

    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw FormatError("png: bad IHDR length: " + path);
      img.width = read_u32_be(data);
      img.height = read_u32_be(data + 4);
      img.bit_depth = data[8];
      const unsigned color_type = data[9];
      const unsigned interlace = data[12];
      if (color_type != 0)
        throw FormatError("png: only grayscale (color type 0) is supported, "
                          "found color type " + std::to_string(color_type) +
                          ": " + path);
      if (img.bit_depth != 8 && img.bit_depth != 16)
        throw FormatError("png: only bit depth 8 or 16 is supported, found " +
                          std::to_string(img.bit_depth) + ": " + path);
      if (interlace != 0)
        throw FormatError("png: interlaced images are not supported: " + path);
      if (img.width == 0 || img.height == 0)
        throw FormatError("png: zero-sized image: " + path);
      saw_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      saw_iend = true;
    }
    // ancillary chunks (gAMA, tEXt, ...) are skipped
    pos += 12 + len;
  }
  if (!saw_ihdr || !saw_iend || idat.empty())
    throw FormatError("png: missing IHDR/IDAT/IEND: " + path);

  const std::size_t bpp = img.bit_depth / 8;
  const std::size_t row_bytes = img.width * bpp;
  std::vector<unsigned char> raw(img.height * (row_bytes + 1));
  uLongf raw_len = static_cast<uLongf>(raw.size());
  const int rc = uncompress(raw.data(), &raw_len, idat.data(),
                            static_cast<uLong>(idat.size()));
  if (rc != Z_OK || raw_len != raw.size())
    throw FormatError("png: corrupt image data: " + path);

  std::vector<unsigned char> flat;
  unfilter(raw, img.height, row_bytes, bpp, flat);

  img.pixels.resize(img.width * img.height);
  if (img.bit_depth == 8) {
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
      img.pixels[i] = static_cast<float>(flat[i]) / 255.0f;
  } else {
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      const std::uint32_t v = (static_cast<std::uint32_t>(flat[i * 2]) << 8) |
                              flat[i * 2 + 1];  // 16-bit samples are big-endian
      img.pixels[i] = static_cast<float>(v) / 65535.0f;
    }
  }
  return img;
}

void write_png_gray8(const std::string& path, std::size_t width,
                     std::size_t height,
                     std::span<const unsigned char> pixels) {
  if (pixels.size() != width * height)
    throw ArgumentError("png: pixel buffer size does not match dimensions");

  std::vector<unsigned char> raw;
  raw.reserve(height * (width + 1));
  for (std::size_t y = 0; y < height; ++y) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), pixels.begin() + static_cast<std::ptrdiff_t>(y * width),
               pixels.begin() + static_cast<std::ptrdiff_t>((y + 1) * width));
  }

  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(),
                static_cast<uLong>(raw.size()), Z_BEST_SPEED) != Z_OK)
    throw IoError("png: compression failed");
  compressed.resize(bound);

  std::vector<unsigned char> out;
  out.insert(out.end(), kSignature, kSignature + 8);
  std::vector<unsigned char> ihdr;
  put_u32_be(ihdr, static_cast<std::uint32_t>(width));
  put_u32_be(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // no interlace
  append_chunk(out, "IHDR", ihdr);
  append_chunk(out, "IDAT", compressed);
  append_chunk(out, "IEND", {});

  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open for writing: " + path);
  file.write(reinterpret_cast<const char*>(out.data()),
             static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("png: write failed: " + path);
}

}  // namespace dcnn
