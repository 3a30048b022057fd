#include "supermix/png_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace supermix {

namespace {

void put_u32_be(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

void append_chunk(std::string& out, const char type[4], const std::string& data) {
  put_u32_be(out, static_cast<uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  out += body;
  uint32_t crc = crc32(0, reinterpret_cast<const Bytef*>(body.data()),
                       static_cast<uInt>(body.size()));
  put_u32_be(out, crc);
}

uint8_t to_byte(double v) {
  double s = std::lround(std::fmin(std::fmax(v, 0.0), 1.0) * 255.0);
  return static_cast<uint8_t>(s);
}

void write_png_bytes(const std::string& path, int w, int h, int channels,
                     const std::vector<uint8_t>& pixels, const std::string& text) {
  if (w <= 0 || h <= 0) throw std::invalid_argument("write_png: empty image");
  if (channels != 1 && channels != 3)
    throw std::invalid_argument("write_png: only 1 or 3 channels supported");

  // Raw scanlines, filter byte 0 per row.
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(h) * (1 + static_cast<std::size_t>(w) * channels));
  for (int y = 0; y < h; ++y) {
    raw.push_back(0);
    const uint8_t* row = pixels.data() + static_cast<std::size_t>(y) * w * channels;
    raw.insert(raw.end(), row, row + static_cast<std::size_t>(w) * channels);
  }

  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw std::runtime_error("write_png: zlib compression failed");
  comp.resize(comp_len);

  std::string out;
  const uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  out.append(reinterpret_cast<const char*>(sig), 8);

  std::string ihdr;
  put_u32_be(ihdr, static_cast<uint32_t>(w));
  put_u32_be(ihdr, static_cast<uint32_t>(h));
  ihdr.push_back(8);                              // bit depth
  ihdr.push_back(channels == 1 ? 0 : 2);          // gray / truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  append_chunk(out, "IHDR", ihdr);

  if (!text.empty()) {
    std::string t = "config";
    t.push_back('\0');
    t += text;
    append_chunk(out, "tEXt", t);
  }

  append_chunk(out, "IDAT",
               std::string(reinterpret_cast<const char*>(comp.data()), comp.size()));
  append_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("write_png: cannot open " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("write_png: short write to " + path);
}

}  // namespace

void write_png(const std::string& path, const Tensor3& image, const std::string& text) {
  if (image.channels != 1 && image.channels != 3)
    throw std::invalid_argument("write_png: image must have 1 or 3 channels");
  std::vector<uint8_t> px(static_cast<std::size_t>(image.width) * image.height * image.channels);
  std::size_t i = 0;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c) px[i++] = to_byte(image.at(x, y, c));
  write_png_bytes(path, image.width, image.height, image.channels, px, text);
}

void write_png(const std::string& path, const Field2& plane, double lo, double hi,
               const std::string& text) {
  if (!(hi > lo)) throw std::invalid_argument("write_png: hi must exceed lo");
  std::vector<uint8_t> px(static_cast<std::size_t>(plane.width) * plane.height);
  std::size_t i = 0;
  for (int y = 0; y < plane.height; ++y)
    for (int x = 0; x < plane.width; ++x)
      px[i++] = to_byte((plane.at(x, y) - lo) / (hi - lo));
  write_png_bytes(path, plane.width, plane.height, 1, px, text);
}

}  // namespace supermix
