#include "supermix/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace supermix {

std::string to_string(OptimMethod m) {
  switch (m) {
    case OptimMethod::NewtonSp: return "newton-sp";
    case OptimMethod::Newton: return "newton";
    case OptimMethod::Sgd: return "sgd";
  }
  return "unknown";
}

OptimMethod optim_method_from_string(const std::string& s) {
  if (s == "newton-sp") return OptimMethod::NewtonSp;
  if (s == "newton") return OptimMethod::Newton;
  if (s == "sgd") return OptimMethod::Sgd;
  throw std::invalid_argument("unknown optimizer method: " + s);
}

void validate_supermix_config(const SuperMixConfig& cfg) {
  if (cfg.k < 2) throw std::invalid_argument("supermix config: k must be at least 2");
  if (!(cfg.alpha > 0.0)) throw std::invalid_argument("supermix config: alpha must be positive");
  if (!(cfg.sigma > 0.0)) throw std::invalid_argument("supermix config: sigma must be positive");
  if (cfg.grid_w < 1 || cfg.grid_h < 1)
    throw std::invalid_argument("supermix config: degenerate mask grid");
  if (cfg.max_iters < 1) throw std::invalid_argument("supermix config: max_iters must be >= 1");
  if (!(cfg.denom_epsilon > 0.0))
    throw std::invalid_argument("supermix config: denom_epsilon must be positive");
  if (cfg.method == OptimMethod::Sgd && !(cfg.sgd_lr > 0.0))
    throw std::invalid_argument("supermix config: sgd_lr must be positive");
  validate_objective_config(cfg.objective);
}

namespace {

// Inner product over all planes, plane-major then cell order. newton_step and
// smooth_newton_step share it so identical inputs give bitwise-equal sums.
double dot(const std::vector<Field2>& a, const std::vector<Field2>& b) {
  double acc = 0.0;
  for (std::size_t p = 0; p < a.size(); ++p)
    for (std::size_t u = 0; u < a[p].data.size(); ++u) acc += a[p].data[u] * b[p].data[u];
  return acc;
}

MaskGrid scaled_direction(const MaskGrid& dir, double scale) {
  MaskGrid out(dir.k, dir.grid_w, dir.grid_h);
  for (int i = 0; i < dir.k; ++i)
    for (std::size_t u = 0; u < dir.cells(); ++u) out.raw[i].data[u] = scale * dir.raw[i].data[u];
  return out;
}

}  // namespace

std::optional<MaskGrid> newton_step(const MaskGrid& grad, double loss_value,
                                    double denom_epsilon) {
  const double denom = dot(grad.raw, grad.raw);
  if (denom < denom_epsilon) return std::nullopt;
  return scaled_direction(grad, -std::fabs(loss_value) / denom);
}

std::optional<MaskGrid> smooth_newton_step(const MaskGrid& grad, double loss_value,
                                           const GaussianKernel& kernel, double denom_epsilon) {
  MaskGrid smoothed(grad.k, grad.grid_w, grad.grid_h);
  for (int i = 0; i < grad.k; ++i) smoothed.raw[i] = gaussian_smooth(grad.raw[i], kernel);
  const double denom = dot(smoothed.raw, grad.raw);
  if (std::fabs(denom) < denom_epsilon) return std::nullopt;
  return scaled_direction(smoothed, -std::fabs(loss_value) / denom);
}

MaskGrid sgd_step(const MaskGrid& grad, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("sgd_step: lr must be positive");
  return scaled_direction(grad, -lr);
}

bool topk_satisfied(const SoftLabel& prediction, const std::vector<int>& classes) {
  if (classes.empty()) throw std::invalid_argument("topk_satisfied: empty class set");
  std::vector<int> wanted(classes);
  std::sort(wanted.begin(), wanted.end());
  wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());
  const int m = static_cast<int>(prediction.probs.size());
  for (int c : wanted)
    if (c < 0 || c >= m) throw std::invalid_argument("topk_satisfied: class out of range");
  const std::size_t kk = wanted.size();

  std::vector<int> order(prediction.probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (prediction.probs[a] != prediction.probs[b]) return prediction.probs[a] > prediction.probs[b];
    return a < b;
  });
  for (std::size_t r = 0; r < kk; ++r)
    if (!std::binary_search(wanted.begin(), wanted.end(), order[r])) return false;
  return true;
}

MixResult supermix(MixInput inputs, const ClassifierSpec& teacher, const SuperMixConfig& cfg,
                   Rng& rng) {
  validate_supermix_config(cfg);
  if (static_cast<int>(inputs.images.size()) != cfg.k)
    throw std::invalid_argument("supermix: image count does not match cfg.k");
  if (inputs.weights.empty()) inputs.weights = sample_dirichlet(cfg.alpha, cfg.k, rng);
  if (inputs.teacher_classes.empty())
    for (const Tensor3& x : inputs.images)
      inputs.teacher_classes.push_back(predict_class(teacher, x));
  validate_mix_input(inputs, teacher.classes);

  const int W = inputs.images[0].width, H = inputs.images[0].height;
  SoftLabel target = target_soft_label(inputs.teacher_classes, inputs.weights, teacher.classes);
  GaussianKernel kernel;
  if (cfg.method == OptimMethod::NewtonSp) kernel = GaussianKernel::make(cfg.sigma);
  const bool include_tv = cfg.method == OptimMethod::Sgd;

  MaskGrid raw(cfg.k, cfg.grid_w, cfg.grid_h);
  MixResult result;
  result.soft_label = target;

  const auto start = std::chrono::steady_clock::now();
  ObjectiveEval ev =
      supermix_loss_and_grad(raw, inputs, teacher, target, cfg.objective, include_tv);
  while (true) {
    if (topk_satisfied(ev.prediction, inputs.teacher_classes)) {
      result.converged = true;
      break;
    }
    if (result.iterations >= cfg.max_iters) break;

    std::optional<MaskGrid> step;
    switch (cfg.method) {
      case OptimMethod::Newton:
        step = newton_step(ev.grad, ev.loss.total, cfg.denom_epsilon);
        break;
      case OptimMethod::NewtonSp:
        step = smooth_newton_step(ev.grad, ev.loss.total, kernel, cfg.denom_epsilon);
        break;
      case OptimMethod::Sgd:
        step = sgd_step(ev.grad, cfg.sgd_lr);
        break;
    }
    if (!step) break;  // stationary: no further progress possible

    for (int i = 0; i < cfg.k; ++i)
      for (std::size_t u = 0; u < raw.cells(); ++u) raw.raw[i].data[u] += step->raw[i].data[u];
    ++result.iterations;
    ev = supermix_loss_and_grad(raw, inputs, teacher, target, cfg.objective, include_tv);
  }
  result.elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  result.mixed = std::move(ev.mixed);
  result.masks = normalize_masks(raw, W, H);
  result.pseudo_class = argmax_index(ev.prediction.probs);
  return result;
}

}  // namespace supermix
