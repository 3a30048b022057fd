#pragma once

#include "supermix/tensor.hpp"

namespace supermix {

/// Normalized 1-D Gaussian tap set used separably in both axes.
/// Support is truncated at radius = ceil(3*sigma) and renormalized so the
/// weights sum to one.
struct GaussianKernel {
  double sigma = 0.0;
  int radius = 0;
  std::vector<double> weights;  // size 2*radius + 1, symmetric about center

  static GaussianKernel make(double sigma);
};

/// Separable 2-D convolution with symmetric reflection at the borders.
/// Output has the same shape as the input.
Field2 gaussian_smooth(const Field2& field, const GaussianKernel& kernel);

/// Corner-aligned bilinear upsampling. Linear in the input; requires
/// out_w >= grid.width and out_h >= grid.height.
Field2 upsample_bilinear(const Field2& grid, int out_w, int out_h);

/// Exact adjoint of upsample_bilinear: for all grids g and fields f,
/// <upsample(g), f> == <g, upsample_adjoint(f)>.
Field2 upsample_adjoint(const Field2& field, int in_w, int in_h);

/// k nonnegative weights summing to one, drawn as k independent
/// Gamma(alpha, 1) variates normalized by their sum.
std::vector<double> sample_dirichlet(double alpha, int k, Rng& rng);

}  // namespace supermix
