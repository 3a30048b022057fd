#include "supermix/objective.hpp"

#include <cmath>
#include <stdexcept>

#include "supermix/kernels.hpp"

namespace supermix {

std::string to_string(DivergenceDirection d) {
  return d == DivergenceDirection::TargetFirst ? "target-first" : "prediction-first";
}

DivergenceDirection divergence_direction_from_string(const std::string& s) {
  if (s == "target-first") return DivergenceDirection::TargetFirst;
  if (s == "prediction-first") return DivergenceDirection::PredictionFirst;
  throw std::invalid_argument("unknown divergence direction: " + s);
}

void validate_objective_config(const ObjectiveConfig& cfg) {
  if (cfg.lambda_s < 0.0 || cfg.lambda_sigma < 0.0)
    throw std::invalid_argument("objective: loss weights must be nonnegative");
  if (cfg.kl_epsilon < 0.0 || cfg.kl_epsilon > 1e-3)
    throw std::invalid_argument("objective: kl_epsilon must lie in [0, 1e-3]");
}

namespace {

void check_normalized(const SoftLabel& p, const char* which) {
  double sum = 0.0;
  for (double v : p.probs) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::invalid_argument(std::string("divergence: ") + which + " has invalid entries");
    sum += v;
  }
  if (std::fabs(sum - 1.0) > 1e-4)
    throw std::invalid_argument(std::string("divergence: ") + which + " does not sum to 1");
}

// Divergence value plus, when dz is non-null, its gradient with respect to the
// prediction's logits (prediction = softmax(z) at tau = 1).
double divergence_and_dz(const SoftLabel& f, const SoftLabel& target, const ObjectiveConfig& cfg,
                         std::vector<double>* dz) {
  if (f.probs.size() != target.probs.size())
    throw std::invalid_argument("divergence: prediction/target length mismatch");
  check_normalized(f, "prediction");
  check_normalized(target, "target");
  const std::size_t m = f.probs.size();
  const double eps = cfg.kl_epsilon;
  double loss = 0.0;

  if (cfg.divergence_direction == DivergenceDirection::TargetFirst) {
    // sum_j t_j * (log t_j - log max(f_j, eps)); zero-target terms vanish.
    for (std::size_t j = 0; j < m; ++j) {
      const double t = target.probs[j];
      if (t > 0.0) loss += t * (std::log(t) - std::log(std::max(f.probs[j], eps)));
    }
    if (dz) {
      // u_j = t_j / f_j where the floor is inactive, else 0 (the floored term
      // is constant in z). dz_r = f_r * (sum_l u_l f_l - u_r).
      std::vector<double> u(m, 0.0);
      double all = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        if (f.probs[j] > eps && target.probs[j] > 0.0) u[j] = target.probs[j] / f.probs[j];
        all += u[j] * f.probs[j];
      }
      dz->resize(m);
      for (std::size_t r = 0; r < m; ++r) (*dz)[r] = f.probs[r] * (all - u[r]);
    }
  } else {
    // sum_j f_j * (log max(f_j, eps) - log max(t_j, eps)).
    std::vector<double> t(m);
    for (std::size_t j = 0; j < m; ++j) {
      t[j] = std::log(std::max(f.probs[j], eps)) - std::log(std::max(target.probs[j], eps));
      loss += f.probs[j] * t[j];
    }
    if (dz) {
      // c_j = t_j + 1 where f_j clears the floor; dz_r = f_r * (c_r - sum c_l f_l).
      double all = 0.0;
      std::vector<double> c(m);
      for (std::size_t j = 0; j < m; ++j) {
        c[j] = t[j] + (f.probs[j] > eps ? 1.0 : 0.0);
        all += c[j] * f.probs[j];
      }
      dz->resize(m);
      for (std::size_t r = 0; r < m; ++r) (*dz)[r] = f.probs[r] * (c[r] - all);
    }
  }
  return std::max(loss, 0.0);
}

}  // namespace

double divergence(const SoftLabel& prediction, const SoftLabel& target,
                  const ObjectiveConfig& cfg) {
  validate_objective_config(cfg);
  return divergence_and_dz(prediction, target, cfg, nullptr);
}

double sparsity_loss(const NormalizedMasks& masks) {
  if (masks.planes.empty()) throw std::invalid_argument("sparsity_loss: no planes");
  double sum = 0.0;
  std::size_t n = 0;
  for (const Field2& p : masks.planes) {
    for (double v : p.data) sum += std::fabs(v * (v - 1.0));
    n += p.data.size();
  }
  return sum / static_cast<double>(n);
}

double tv_smoothness_loss(const NormalizedMasks& masks) {
  if (masks.planes.empty()) throw std::invalid_argument("tv_smoothness_loss: no planes");
  double sum = 0.0;
  std::size_t n = 0;
  for (const Field2& p : masks.planes) {
    for (int y = 0; y < p.height; ++y)
      for (int x = 0; x < p.width; ++x) {
        if (x + 1 < p.width) {
          double d = std::fabs(p.at(x + 1, y) - p.at(x, y));
          sum += d * d * d;
        }
        if (y + 1 < p.height) {
          double d = std::fabs(p.at(x, y + 1) - p.at(x, y));
          sum += d * d * d;
        }
      }
    n += p.data.size();
  }
  return sum / static_cast<double>(n);
}

namespace {

// Pulls dL/d(normalized grid masks) back to dL/d(raw masks) through the
// sigmoid-quotient Jacobian. Written as (s'_j / S^2) * sum_i s_i (B_j - B_i):
// when every upstream plane carries the same values, each difference is an
// exact floating-point zero, so the result is exactly zero.
std::vector<Field2> normalization_backward(const MaskGrid& raw, const std::vector<Field2>& B) {
  const int k = raw.k;
  std::vector<Field2> out(k, Field2(raw.grid_w, raw.grid_h));
  const std::size_t cells = raw.cells();
  std::vector<double> s(k);
  for (std::size_t u = 0; u < cells; ++u) {
    double S = 0.0;
    for (int i = 0; i < k; ++i) {
      s[i] = std::fmax(1.0 / (1.0 + std::exp(-raw.raw[i].data[u])), kSigmoidFloor);
      S += s[i];
    }
    for (int j = 0; j < k; ++j) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += s[i] * (B[j].data[u] - B[i].data[u]);
      const double sp = s[j] * (1.0 - s[j]);
      out[j].data[u] = sp / (S * S) * acc;
    }
  }
  return out;
}

// dL/d(raw) for an upstream gradient given on the full-resolution planes:
// upsampling adjoint per plane, then the normalization Jacobian.
std::vector<Field2> pull_back_plane_grad(const MaskGrid& raw, const std::vector<Field2>& dPlanes) {
  std::vector<Field2> grid;
  grid.reserve(dPlanes.size());
  for (const Field2& dp : dPlanes) grid.push_back(upsample_adjoint(dp, raw.grid_w, raw.grid_h));
  return normalization_backward(raw, grid);
}

}  // namespace

ObjectiveEval supermix_loss_and_grad(const MaskGrid& raw, const MixInput& in,
                                     const ClassifierSpec& teacher, const SoftLabel& target,
                                     const ObjectiveConfig& cfg, bool include_tv) {
  validate_objective_config(cfg);
  if (raw.k != static_cast<int>(in.images.size()))
    throw std::invalid_argument("supermix_loss_and_grad: mask/image count mismatch");
  validate_mix_input(in, teacher.classes);
  if (static_cast<int>(target.probs.size()) != teacher.classes)
    throw std::invalid_argument("supermix_loss_and_grad: target length mismatch");

  const int W = in.images[0].width, H = in.images[0].height, C = in.images[0].channels;
  const int k = raw.k;

  ObjectiveEval ev;
  NormalizedMasks planes = normalize_masks(raw, W, H);
  ev.mixed = mix(in, planes);

  Logits z = forward(teacher, ev.mixed);
  ev.prediction = tempered_softmax(z, 1.0);

  std::vector<double> dz;
  ev.loss.kl = divergence_and_dz(ev.prediction, target, cfg, &dz);
  ev.loss.sparsity = sparsity_loss(planes);
  ev.loss.tv = include_tv ? tv_smoothness_loss(planes) : 0.0;
  ev.loss.total = ev.loss.kl + cfg.lambda_s * ev.loss.sparsity;
  if (include_tv) ev.loss.total += cfg.lambda_sigma * ev.loss.tv;

  // Divergence path: teacher backward, reduce over channels against each
  // input image, then pull back to the raw grid.
  Tensor3 G = backward_to_input(teacher, ev.mixed, dz);
  std::vector<Field2> kl_planes(k, Field2(W, H));
  for (int i = 0; i < k; ++i)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int c = 0; c < C; ++c) acc += G.at(x, y, c) * in.images[i].at(x, y, c);
        kl_planes[i].at(x, y) = acc;
      }
  std::vector<Field2> kl_grad = pull_back_plane_grad(raw, kl_planes);

  // Sparsity path, unit weight; scaled by lambda_s after the pullback so the
  // total is literally kl_grad + lambda_s * sparsity_grad.
  const double inv_n = 1.0 / (static_cast<double>(k) * W * H);
  std::vector<Field2> sp_planes(k, Field2(W, H));
  for (int i = 0; i < k; ++i)
    for (std::size_t u = 0; u < planes.planes[i].data.size(); ++u) {
      const double v = planes.planes[i].data[u];
      const double q = v * (v - 1.0);
      sp_planes[i].data[u] = q > 0.0 ? (2.0 * v - 1.0) * inv_n
                           : q < 0.0 ? (1.0 - 2.0 * v) * inv_n
                                     : 0.0;
    }
  std::vector<Field2> sp_grad = pull_back_plane_grad(raw, sp_planes);

  std::vector<Field2> tv_grad;
  if (include_tv) {
    std::vector<Field2> tv_planes(k, Field2(W, H));
    for (int i = 0; i < k; ++i) {
      const Field2& p = planes.planes[i];
      Field2& d = tv_planes[i];
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          if (x + 1 < W) {
            double diff = p.at(x + 1, y) - p.at(x, y);
            double g = 3.0 * diff * std::fabs(diff) * inv_n;
            d.at(x + 1, y) += g;
            d.at(x, y) -= g;
          }
          if (y + 1 < H) {
            double diff = p.at(x, y + 1) - p.at(x, y);
            double g = 3.0 * diff * std::fabs(diff) * inv_n;
            d.at(x, y + 1) += g;
            d.at(x, y) -= g;
          }
        }
    }
    tv_grad = pull_back_plane_grad(raw, tv_planes);
  }

  ev.grad = MaskGrid(k, raw.grid_w, raw.grid_h);
  for (int i = 0; i < k; ++i)
    for (std::size_t u = 0; u < raw.cells(); ++u) {
      double g = kl_grad[i].data[u] + cfg.lambda_s * sp_grad[i].data[u];
      if (include_tv) g += cfg.lambda_sigma * tv_grad[i].data[u];
      ev.grad.raw[i].data[u] = g;
    }
  return ev;
}

}  // namespace supermix
