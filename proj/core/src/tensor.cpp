#include "supermix/tensor.hpp"

#include <stdexcept>

namespace supermix {

Tensor3::Tensor3(int w, int h, int c, double fill)
    : width(w), height(h), channels(c) {
  if (w < 0 || h < 0 || c < 0) throw std::invalid_argument("Tensor3: negative dimension");
  data.assign(static_cast<std::size_t>(w) * h * c, fill);
}

Field2::Field2(int w, int h, double fill) : width(w), height(h) {
  if (w < 0 || h < 0) throw std::invalid_argument("Field2: negative dimension");
  data.assign(static_cast<std::size_t>(w) * h, fill);
}

bool is_image_valued(const Tensor3& t) {
  for (double v : t.data)
    if (!(v >= 0.0 && v <= 1.0)) return false;
  return true;
}

}  // namespace supermix
