#pragma once

#include <string>

#include "supermix/tensor.hpp"

namespace supermix {

/// Write an image tensor (1 or 3 channels, values in [0,1]) as an 8-bit
/// grayscale/RGB PNG. `text` is stored in a tEXt chunk under the key
/// "config" when nonempty.
void write_png(const std::string& path, const Tensor3& image,
               const std::string& text = {});

/// Write a single plane as a grayscale PNG, linearly mapping [lo, hi] to
/// [0, 255].
void write_png(const std::string& path, const Field2& plane, double lo = 0.0,
               double hi = 1.0, const std::string& text = {});

}  // namespace supermix
