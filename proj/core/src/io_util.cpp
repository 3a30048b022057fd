#include "io_util.hpp"

#include <filesystem>
#include <fstream>

namespace supermix::io {

void write_file_atomic(const std::string& path, const std::string& payload) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + tmp.string());
    f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!f) throw std::runtime_error("short write: " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace supermix::io
