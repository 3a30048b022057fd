#pragma once

#include <optional>
#include <string>
#include <vector>

#include "supermix/kernels.hpp"
#include "supermix/mixing.hpp"
#include "supermix/objective.hpp"

namespace supermix {

enum class OptimMethod { NewtonSp, Newton, Sgd };

std::string to_string(OptimMethod m);
OptimMethod optim_method_from_string(const std::string& s);

struct SuperMixConfig {
  int k = 2;                 // inputs per mix
  double alpha = 3.0;        // Dirichlet concentration
  double sigma = 1.0;        // smoothing std for the projected Newton step
  int grid_w = 8, grid_h = 8;
  ObjectiveConfig objective; // lambda_s, lambda_sigma, kl_epsilon, direction
  int max_iters = 50;
  double denom_epsilon = 1e-12;
  OptimMethod method = OptimMethod::NewtonSp;
  double sgd_lr = 0.1;
};

void validate_supermix_config(const SuperMixConfig& cfg);

/// Root step of the first-order model: delta = -(|loss| / <g,g>) * g over all
/// planes jointly. Returns nothing when <g,g> < denom_epsilon (stationary
/// point; the caller stops). Satisfies <g, delta> = -|loss| up to rounding.
std::optional<MaskGrid> newton_step(const MaskGrid& grad, double loss_value,
                                    double denom_epsilon);

/// Smoothed variant: delta = -(|loss| / <smooth(g), g>) * smooth(g), with the
/// kernel applied plane-by-plane. Same root identity <g, delta> = -|loss|;
/// the update direction is the smoothed gradient. Returns nothing when the
/// denominator magnitude falls below denom_epsilon.
std::optional<MaskGrid> smooth_newton_step(const MaskGrid& grad, double loss_value,
                                           const GaussianKernel& kernel, double denom_epsilon);

/// Plain gradient step: delta = -lr * grad. No momentum.
MaskGrid sgd_step(const MaskGrid& grad, double lr);

/// True iff the distinct classes of Y all appear among the top-|distinct Y|
/// entries of the prediction, ranking by probability with ties broken toward
/// the lower index.
bool topk_satisfied(const SoftLabel& prediction, const std::vector<int>& classes);

struct MixResult {
  Tensor3 mixed;
  NormalizedMasks masks;
  SoftLabel soft_label;   // the Dirichlet-weighted target over teacher classes
  int pseudo_class = 0;   // teacher argmax on the final mixed image
  int iterations = 0;
  bool converged = false;
  double elapsed = 0.0;   // seconds spent in the optimization loop
};

/// Runs the full mask optimization for one instance. Missing fields of
/// `inputs` are filled in: empty weights are drawn from Dirichlet(alpha) and
/// empty teacher_classes are predicted with the teacher (callers may pin
/// either for deterministic tests). The stop criterion is evaluated before
/// every step, including the initial state, so an instance whose plain
/// average already matches the target exits after zero iterations.
MixResult supermix(MixInput inputs, const ClassifierSpec& teacher, const SuperMixConfig& cfg,
                   Rng& rng);

}  // namespace supermix
