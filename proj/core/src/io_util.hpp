#pragma once

// Internal little-endian byte helpers shared by the container writers.
// Not installed; file formats themselves are documented in docs/FORMATS.md.

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>

namespace supermix::io {

inline void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

inline void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

/// Bounds-checked forward reader over an in-memory file image. Any read past
/// the end throws, so truncated files surface as diagnostics, not crashes.
class Cursor {
 public:
  Cursor(const std::string& buf, std::string path) : buf_(buf), path_(std::move(path)) {}

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(byte()) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(byte()) << (8 * i);
    return v;
  }
  double f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  uint8_t u8() {
    need(1);
    return byte();
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  uint8_t byte() { return static_cast<uint8_t>(buf_[pos_++]); }
  void need(std::size_t n) {
    if (pos_ + n > buf_.size()) throw std::runtime_error("corrupt or truncated file: " + path_);
  }
  const std::string& buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

/// Writes payload to path via a .tmp sibling plus rename, so a crash mid-write
/// never leaves a partial file at the final path.
void write_file_atomic(const std::string& path, const std::string& payload);

std::string read_file(const std::string& path);

}  // namespace supermix::io
