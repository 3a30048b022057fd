#include "supermix/checkpoint.hpp"

#include <stdexcept>

#include "io_util.hpp"

namespace supermix {

namespace {
constexpr uint32_t kCheckpointVersion = 1;
}

void save_checkpoint(const std::string& path, const ClassifierSpec& model,
                     const std::string& config_echo) {
  validate_classifier(model);
  std::string out;
  out += "SMXM";
  io::put_u32(out, kCheckpointVersion);
  std::string arch = to_string(model.arch);
  io::put_u32(out, static_cast<uint32_t>(arch.size()));
  out += arch;
  io::put_u32(out, static_cast<uint32_t>(model.width));
  io::put_u32(out, static_cast<uint32_t>(model.height));
  io::put_u32(out, static_cast<uint32_t>(model.channels));
  io::put_u32(out, static_cast<uint32_t>(model.classes));
  io::put_u32(out, static_cast<uint32_t>(model.hidden.size()));
  for (int h : model.hidden) io::put_u32(out, static_cast<uint32_t>(h));
  io::put_u32(out, static_cast<uint32_t>(config_echo.size()));
  out += config_echo;
  io::put_u32(out, static_cast<uint32_t>(model.params.size()));
  for (const ParamBlock& b : model.params) {
    io::put_u32(out, static_cast<uint32_t>(b.name.size()));
    out += b.name;
    io::put_u32(out, static_cast<uint32_t>(b.shape.size()));
    for (int d : b.shape) io::put_u32(out, static_cast<uint32_t>(d));
    io::put_u64(out, b.values.size());
    for (double v : b.values) io::put_f64(out, v);
  }
  io::write_file_atomic(path, out);
}

StoredCheckpoint load_checkpoint(const std::string& path) {
  std::string buf = io::read_file(path);
  io::Cursor cur(buf, path);
  if (cur.bytes(4) != "SMXM")
    throw std::runtime_error("not a checkpoint file (bad magic): " + path);
  if (cur.u32() != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version in " + path);

  StoredCheckpoint out;
  uint32_t arch_len = cur.u32();
  if (arch_len > 64) throw std::runtime_error("corrupt checkpoint (bad arch tag): " + path);
  out.model.arch = arch_from_string(cur.bytes(arch_len));
  out.model.width = static_cast<int>(cur.u32());
  out.model.height = static_cast<int>(cur.u32());
  out.model.channels = static_cast<int>(cur.u32());
  out.model.classes = static_cast<int>(cur.u32());
  uint32_t hidden_count = cur.u32();
  if (hidden_count > 64) throw std::runtime_error("corrupt checkpoint (bad hidden list): " + path);
  for (uint32_t i = 0; i < hidden_count; ++i)
    out.model.hidden.push_back(static_cast<int>(cur.u32()));
  uint32_t config_len = cur.u32();
  out.config_echo = cur.bytes(config_len);

  uint32_t block_count = cur.u32();
  if (block_count > 1024) throw std::runtime_error("corrupt checkpoint (bad block count): " + path);
  for (uint32_t b = 0; b < block_count; ++b) {
    ParamBlock block;
    uint32_t name_len = cur.u32();
    if (name_len > 256) throw std::runtime_error("corrupt checkpoint (bad block name): " + path);
    block.name = cur.bytes(name_len);
    uint32_t ndims = cur.u32();
    if (ndims > 8) throw std::runtime_error("corrupt checkpoint (bad block rank): " + path);
    std::size_t expect = 1;
    for (uint32_t d = 0; d < ndims; ++d) {
      int dim = static_cast<int>(cur.u32());
      if (dim < 1) throw std::runtime_error("corrupt checkpoint (bad block dim): " + path);
      block.shape.push_back(dim);
      expect *= static_cast<std::size_t>(dim);
    }
    uint64_t count = cur.u64();
    if (count != expect)
      throw std::runtime_error("corrupt checkpoint (block size mismatch): " + path);
    block.values.resize(count);
    for (double& v : block.values) v = cur.f64();
    out.model.params.push_back(std::move(block));
  }
  if (!cur.at_end()) throw std::runtime_error("trailing bytes in checkpoint: " + path);

  try {
    validate_classifier(out.model);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("corrupt checkpoint (" + std::string(e.what()) + "): " + path);
  }
  return out;
}

}  // namespace supermix
