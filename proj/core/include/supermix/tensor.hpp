#pragma once

#include <cstddef>
#include <random>
#include <vector>

namespace supermix {

using Rng = std::mt19937_64;

/// A W x H x C grid of real values, row-major with interleaved channels:
/// data[(y*width + x)*channels + c]. Image-valued instances keep every
/// element in [0, 1].
struct Tensor3 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(int w, int h, int c, double fill = 0.0);

  double& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Tensor3& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

/// A single 2-D plane of unconstrained reals, row-major: data[y*width + x].
struct Field2 {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Field2() = default;
  Field2(int w, int h, double fill = 0.0);

  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  int cells() const { return width * height; }
  bool same_shape(const Field2& o) const { return width == o.width && height == o.height; }
};

/// True when every element lies in [0, 1].
bool is_image_valued(const Tensor3& t);

}  // namespace supermix
