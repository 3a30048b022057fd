#include "supermix/mixing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "supermix/kernels.hpp"

namespace supermix {

MaskGrid::MaskGrid(int k_, int gw, int gh) : k(k_), grid_w(gw), grid_h(gh) {
  if (k < 2) throw std::invalid_argument("MaskGrid: need k >= 2 planes");
  if (gw < 1 || gh < 1) throw std::invalid_argument("MaskGrid: degenerate grid");
  raw.assign(k, Field2(gw, gh));
}

void validate_mix_input(const MixInput& in, int class_count) {
  const std::size_t k = in.images.size();
  if (k < 2) throw std::invalid_argument("mix input: need k >= 2 images");
  if (in.teacher_classes.size() != k || in.weights.size() != k)
    throw std::invalid_argument("mix input: images, classes, and weights must align");
  for (std::size_t i = 1; i < k; ++i)
    if (!in.images[i].same_shape(in.images[0]))
      throw std::invalid_argument("mix input: images must share dims");
  double sum = 0.0;
  for (double r : in.weights) {
    if (r < 0.0) throw std::invalid_argument("mix input: negative weight");
    sum += r;
  }
  if (std::fabs(sum - 1.0) > 1e-6)
    throw std::invalid_argument("mix input: weights must sum to 1");
  for (int c : in.teacher_classes)
    if (c < 0 || c >= class_count)
      throw std::invalid_argument("mix input: class index out of range");
}

NormalizedMasks normalize_masks(const MaskGrid& raw, int out_w, int out_h) {
  if (raw.k < 2) throw std::invalid_argument("normalize_masks: need k >= 2 planes");
  if (out_w < 1 || out_h < 1) throw std::invalid_argument("normalize_masks: degenerate output");

  // Sigmoid quotient at grid resolution; the floored factors keep the
  // denominator >= k * kSigmoidFloor > 0 even when every plane saturates.
  std::vector<Field2> grid(raw.k, Field2(raw.grid_w, raw.grid_h));
  const std::size_t cells = raw.cells();
  for (std::size_t u = 0; u < cells; ++u) {
    double sum = 0.0;
    for (int i = 0; i < raw.k; ++i) {
      double s = std::fmax(1.0 / (1.0 + std::exp(-raw.raw[i].data[u])), kSigmoidFloor);
      grid[i].data[u] = s;
      sum += s;
    }
    for (int i = 0; i < raw.k; ++i) grid[i].data[u] /= sum;
  }

  NormalizedMasks out;
  out.k = raw.k;
  out.planes.reserve(raw.k);
  for (int i = 0; i < raw.k; ++i) out.planes.push_back(upsample_bilinear(grid[i], out_w, out_h));
  return out;
}

Tensor3 mix(const MixInput& in, const NormalizedMasks& masks) {
  const std::size_t k = in.images.size();
  if (k < 2 || masks.planes.size() != k)
    throw std::invalid_argument("mix: image/mask count mismatch");
  const Tensor3& x0 = in.images[0];
  for (const Field2& p : masks.planes)
    if (p.width != x0.width || p.height != x0.height)
      throw std::invalid_argument("mix: mask plane dims do not match the images");
  for (std::size_t i = 1; i < k; ++i)
    if (!in.images[i].same_shape(x0)) throw std::invalid_argument("mix: images must share dims");

  Tensor3 out(x0.width, x0.height, x0.channels);
  for (int y = 0; y < x0.height; ++y)
    for (int x = 0; x < x0.width; ++x) {
      for (int c = 0; c < x0.channels; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < k; ++i)
          acc += in.images[i].at(x, y, c) * masks.planes[i].at(x, y);
        out.at(x, y, c) = acc;
      }
    }
  return out;
}

SoftLabel target_soft_label(const std::vector<int>& classes, const std::vector<double>& r,
                            int class_count) {
  if (classes.size() != r.size() || classes.empty())
    throw std::invalid_argument("target_soft_label: classes and weights must align");
  double sum = 0.0;
  for (double w : r) sum += w;
  if (std::fabs(sum - 1.0) > 1e-6)
    throw std::invalid_argument("target_soft_label: weights must sum to 1");
  SoftLabel out;
  out.probs.assign(class_count, 0.0);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] < 0 || classes[i] >= class_count)
      throw std::invalid_argument("target_soft_label: class index out of range");
    out.probs[classes[i]] += r[i];
  }
  return out;
}

namespace {

void check_pair(const Tensor3& x0, const Tensor3& x1) {
  if (!x0.same_shape(x1)) throw std::invalid_argument("pair mix: images must share dims");
}

double draw_beta(double alpha, Rng& rng) {
  return sample_dirichlet(alpha, 2, rng)[0];
}

}  // namespace

PairMixResult mixup_fixed(const Tensor3& x0, int y0, const Tensor3& x1, int y1, int class_count,
                          double r) {
  check_pair(x0, x1);
  if (r < 0.0 || r > 1.0) throw std::invalid_argument("mixup: r must lie in [0,1]");
  PairMixResult out;
  out.r = r;
  out.image = Tensor3(x0.width, x0.height, x0.channels);
  const double r1 = 1.0 - r;
  for (std::size_t i = 0; i < x0.data.size(); ++i)
    out.image.data[i] = x0.data[i] * r + x1.data[i] * r1;
  out.label = target_soft_label({y0, y1}, {r, r1}, class_count);
  return out;
}

PairMixResult mixup(const Tensor3& x0, int y0, const Tensor3& x1, int y1, int class_count,
                    double alpha, Rng& rng) {
  if (!(alpha > 0.0)) throw std::invalid_argument("mixup: alpha must be positive");
  return mixup_fixed(x0, y0, x1, y1, class_count, draw_beta(alpha, rng));
}

PairMixResult cutmix_fixed(const Tensor3& x0, int y0, const Tensor3& x1, int y1, int class_count,
                           int x_lo, int y_lo, int x_hi, int y_hi) {
  check_pair(x0, x1);
  x_lo = std::clamp(x_lo, 0, x0.width);
  x_hi = std::clamp(x_hi, 0, x0.width);
  y_lo = std::clamp(y_lo, 0, x0.height);
  y_hi = std::clamp(y_hi, 0, x0.height);
  if (x_hi < x_lo || y_hi < y_lo) throw std::invalid_argument("cutmix: inverted box");

  PairMixResult out;
  out.image = x0;
  for (int y = y_lo; y < y_hi; ++y)
    for (int x = x_lo; x < x_hi; ++x)
      for (int c = 0; c < x0.channels; ++c) out.image.at(x, y, c) = x1.at(x, y, c);

  const double area = static_cast<double>(x_hi - x_lo) * (y_hi - y_lo);
  const double frac = area / (static_cast<double>(x0.width) * x0.height);
  out.r = 1.0 - frac;
  out.label = target_soft_label({y0, y1}, {out.r, frac}, class_count);
  return out;
}

PairMixResult cutmix(const Tensor3& x0, int y0, const Tensor3& x1, int y1, int class_count,
                     double alpha, Rng& rng) {
  if (!(alpha > 0.0)) throw std::invalid_argument("cutmix: alpha must be positive");
  check_pair(x0, x1);
  const double r = draw_beta(alpha, rng);
  // Square-root scaling makes the expected box area (1-r) * W * H.
  const double cut = std::sqrt(1.0 - r);
  const int cut_w = static_cast<int>(std::lround(x0.width * cut));
  const int cut_h = static_cast<int>(std::lround(x0.height * cut));
  std::uniform_int_distribution<int> ux(0, x0.width - 1), uy(0, x0.height - 1);
  const int cx = ux(rng), cy = uy(rng);
  return cutmix_fixed(x0, y0, x1, y1, class_count, cx - cut_w / 2, cy - cut_h / 2,
                      cx - cut_w / 2 + cut_w, cy - cut_h / 2 + cut_h);
}

}  // namespace supermix
