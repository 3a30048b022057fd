#include "supermix/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace supermix {

namespace {

// Symmetric reflection: -1 -> 0, -2 -> 1, n -> n-1, ...
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

struct AxisTable {
  std::vector<int> lo;      // lower source index per output index
  std::vector<double> frac; // weight of the upper neighbor
};

AxisTable corner_aligned_axis(int in_n, int out_n) {
  AxisTable t;
  t.lo.resize(out_n);
  t.frac.resize(out_n);
  const double scale = (out_n > 1) ? static_cast<double>(in_n - 1) / (out_n - 1) : 0.0;
  for (int i = 0; i < out_n; ++i) {
    double src = i * scale;
    int lo = static_cast<int>(src);
    if (lo > in_n - 2) lo = in_n - 2;  // keep lo+1 valid; exact at the far corner
    if (lo < 0) lo = 0;                // in_n == 1
    t.lo[i] = lo;
    t.frac[i] = (in_n > 1) ? src - lo : 0.0;
  }
  return t;
}

}  // namespace

GaussianKernel GaussianKernel::make(double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("GaussianKernel: sigma must be positive");
  GaussianKernel k;
  k.sigma = sigma;
  k.radius = static_cast<int>(std::ceil(3.0 * sigma));
  k.weights.resize(2 * k.radius + 1);
  double sum = 0.0;
  for (int i = -k.radius; i <= k.radius; ++i) {
    double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k.weights[i + k.radius] = w;
    sum += w;
  }
  for (double& w : k.weights) w /= sum;
  return k;
}

Field2 gaussian_smooth(const Field2& field, const GaussianKernel& kernel) {
  if (field.width <= 0 || field.height <= 0)
    throw std::invalid_argument("gaussian_smooth: zero-size field");
  const int w = field.width, h = field.height, r = kernel.radius;

  // Accumulate deviations from the center tap: out = v + sum w_t (v_t - v).
  // Equal to the plain weighted sum (weights sum to 1) but exactly the
  // identity on constant fields, which the smoothed Newton step relies on.
  Field2 tmp(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double center = field.at(x, y);
      double acc = 0.0;
      for (int t = -r; t <= r; ++t)
        acc += kernel.weights[t + r] * (field.at(reflect_index(x + t, w), y) - center);
      tmp.at(x, y) = center + acc;
    }
  }
  Field2 out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double center = tmp.at(x, y);
      double acc = 0.0;
      for (int t = -r; t <= r; ++t)
        acc += kernel.weights[t + r] * (tmp.at(x, reflect_index(y + t, h)) - center);
      out.at(x, y) = center + acc;
    }
  }
  return out;
}

Field2 upsample_bilinear(const Field2& grid, int out_w, int out_h) {
  if (grid.width <= 0 || grid.height <= 0)
    throw std::invalid_argument("upsample_bilinear: empty source grid");
  if (out_w < grid.width || out_h < grid.height)
    throw std::invalid_argument("upsample_bilinear: target smaller than source");

  const AxisTable tx = corner_aligned_axis(grid.width, out_w);
  const AxisTable ty = corner_aligned_axis(grid.height, out_h);

  Field2 out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    const int y0 = ty.lo[y];
    const int y1 = (grid.height > 1) ? y0 + 1 : y0;
    const double fy = ty.frac[y];
    for (int x = 0; x < out_w; ++x) {
      const int x0 = tx.lo[x];
      const int x1 = (grid.width > 1) ? x0 + 1 : x0;
      const double fx = tx.frac[x];
      const double top = (1.0 - fx) * grid.at(x0, y0) + fx * grid.at(x1, y0);
      const double bot = (1.0 - fx) * grid.at(x0, y1) + fx * grid.at(x1, y1);
      out.at(x, y) = (1.0 - fy) * top + fy * bot;
    }
  }
  return out;
}

Field2 upsample_adjoint(const Field2& field, int in_w, int in_h) {
  if (in_w <= 0 || in_h <= 0)
    throw std::invalid_argument("upsample_adjoint: empty target grid");
  if (field.width < in_w || field.height < in_h)
    throw std::invalid_argument("upsample_adjoint: field smaller than source grid");

  const AxisTable tx = corner_aligned_axis(in_w, field.width);
  const AxisTable ty = corner_aligned_axis(in_h, field.height);

  Field2 out(in_w, in_h);
  for (int y = 0; y < field.height; ++y) {
    const int y0 = ty.lo[y];
    const int y1 = (in_h > 1) ? y0 + 1 : y0;
    const double fy = ty.frac[y];
    for (int x = 0; x < field.width; ++x) {
      const int x0 = tx.lo[x];
      const int x1 = (in_w > 1) ? x0 + 1 : x0;
      const double fx = tx.frac[x];
      const double v = field.at(x, y);
      out.at(x0, y0) += (1.0 - fy) * (1.0 - fx) * v;
      out.at(x1, y0) += (1.0 - fy) * fx * v;
      out.at(x0, y1) += fy * (1.0 - fx) * v;
      out.at(x1, y1) += fy * fx * v;
    }
  }
  return out;
}

std::vector<double> sample_dirichlet(double alpha, int k, Rng& rng) {
  if (!(alpha > 0.0)) throw std::invalid_argument("sample_dirichlet: alpha must be positive");
  if (k < 2) throw std::invalid_argument("sample_dirichlet: k must be at least 2");

  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> w(k);
  for (int attempt = 0; attempt < 100; ++attempt) {
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
      w[i] = gamma(rng);
      sum += w[i];
    }
    if (sum > 0.0 && std::isfinite(sum)) {
      for (double& v : w) v /= sum;
      return w;
    }
  }
  // All draws underflowed (alpha very small): the limit is a one-hot draw.
  std::uniform_int_distribution<int> pick(0, k - 1);
  std::fill(w.begin(), w.end(), 0.0);
  w[pick(rng)] = 1.0;
  return w;
}

}  // namespace supermix
