#pragma once

#include <vector>

#include "supermix/classifier.hpp"
#include "supermix/tensor.hpp"

namespace supermix {

/// k unconstrained mask planes at grid resolution; the optimizer's variables.
struct MaskGrid {
  int k = 0;
  int grid_w = 0, grid_h = 0;
  std::vector<Field2> raw;

  MaskGrid() = default;
  MaskGrid(int k, int grid_w, int grid_h);
  std::size_t cells() const { return static_cast<std::size_t>(grid_w) * grid_h; }
};

/// k full-resolution planes, each in [0,1], summing to 1 at every pixel.
struct NormalizedMasks {
  int k = 0;
  std::vector<Field2> planes;
};

/// One mixing instance: k images, their teacher-predicted classes, and the
/// Dirichlet weight vector r.
struct MixInput {
  std::vector<Tensor3> images;
  std::vector<int> teacher_classes;
  std::vector<double> weights;
};

void validate_mix_input(const MixInput& in, int class_count);

/// Lower bound on each sigmoid factor in the quotient. sigma(x) underflows to
/// exactly 0 below x ~ -745; the floor keeps the denominator (and its square,
/// in the Jacobian) positive while preserving the saturated limit of 1/k.
inline constexpr double kSigmoidFloor = 1e-150;

/// Sigmoid-quotient normalization at grid resolution, then bilinear upsampling
/// of each plane to (out_w, out_h). The pointwise sum stays 1 because the
/// upsampling is linear and the grid planes already sum to 1.
NormalizedMasks normalize_masks(const MaskGrid& raw, int out_w, int out_h);

/// x_hat(u,c) = sum_i x_i(u,c) * plane_i(u). Masks broadcast over channels.
Tensor3 mix(const MixInput& in, const NormalizedMasks& masks);

/// y_hat = sum_i r_i * onehot(classes[i]); duplicate classes accumulate.
SoftLabel target_soft_label(const std::vector<int>& classes, const std::vector<double>& r,
                            int class_count);

struct PairMixResult {
  Tensor3 image;
  SoftLabel label;
  double r = 0.0;  // weight on x0
};

/// Convex blend r*x0 + (1-r)*x1 with r ~ Beta(alpha, alpha).
PairMixResult mixup(const Tensor3& x0, int y0, const Tensor3& x1, int y1, int class_count,
                    double alpha, Rng& rng);
/// Same blend with a caller-chosen r; used by tests and the reduction checks.
PairMixResult mixup_fixed(const Tensor3& x0, int y0, const Tensor3& x1, int y1, int class_count,
                          double r);

/// Pastes a uniformly placed rectangle of area ~ (1-r)*W*H from x1 onto x0,
/// r ~ Beta(alpha, alpha). Label weights equal the clipped pixel-area
/// fractions, so they always match the pixels actually pasted.
PairMixResult cutmix(const Tensor3& x0, int y0, const Tensor3& x1, int y1, int class_count,
                     double alpha, Rng& rng);
/// Deterministic variant with an explicit box [x_lo, x_hi) x [y_lo, y_hi).
PairMixResult cutmix_fixed(const Tensor3& x0, int y0, const Tensor3& x1, int y1, int class_count,
                           int x_lo, int y_lo, int x_hi, int y_hi);

}  // namespace supermix
