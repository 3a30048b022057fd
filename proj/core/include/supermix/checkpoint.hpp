#pragma once

#include <string>

#include "supermix/classifier.hpp"

namespace supermix {

// Model checkpoint container (.smxm): architecture tag, dimension header,
// and little-endian float64 parameter blocks. Layout in docs/FORMATS.md.
// Writes are atomic (tmp file + rename); loads validate the header and the
// block shapes and throw on any corruption.

struct StoredCheckpoint {
  ClassifierSpec model;
  std::string config_echo;
};

void save_checkpoint(const std::string& path, const ClassifierSpec& model,
                     const std::string& config_echo);

StoredCheckpoint load_checkpoint(const std::string& path);

}  // namespace supermix
