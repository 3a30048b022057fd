#pragma once

#include <string>

#include "supermix/classifier.hpp"
#include "supermix/mixing.hpp"

namespace supermix {

/// Which way the divergence reads. TargetFirst computes KL(target || prediction),
/// which stays finite when the target soft label has zero entries and is the
/// default. PredictionFirst computes KL(prediction || target) with kl_epsilon
/// flooring inside the log.
enum class DivergenceDirection { TargetFirst, PredictionFirst };

std::string to_string(DivergenceDirection d);
DivergenceDirection divergence_direction_from_string(const std::string& s);

struct ObjectiveConfig {
  double lambda_s = 25.0;      // sparsity weight
  double lambda_sigma = 250.0; // TV weight; only the SGD baseline turns TV on
  double kl_epsilon = 1e-12;
  DivergenceDirection divergence_direction = DivergenceDirection::TargetFirst;
};

void validate_objective_config(const ObjectiveConfig& cfg);

/// total = kl + lambda_s * sparsity, plus lambda_sigma * tv when TV is active.
struct LossBreakdown {
  double kl = 0.0;
  double sparsity = 0.0;
  double tv = 0.0;
  double total = 0.0;
};

/// Divergence between a prediction and a target soft label, >= 0, finite.
/// Both inputs must sum to 1 within 1e-4.
double divergence(const SoftLabel& prediction, const SoftLabel& target,
                  const ObjectiveConfig& cfg);

/// Mean over all k*W*H mask entries of |m(m-1)|; 0 iff the masks are binary,
/// at most 0.25 (attained by the all-0.5 plane).
double sparsity_loss(const NormalizedMasks& masks);

/// Mean over k*W*H of the cubed 3-norm of the forward-difference spatial
/// gradient. Planes with a degenerate axis contribute no differences there.
double tv_smoothness_loss(const NormalizedMasks& masks);

/// One full evaluation of a mixing state.
struct ObjectiveEval {
  LossBreakdown loss;
  MaskGrid grad;        // d(loss.total)/d(raw), same shape as raw
  Tensor3 mixed;        // the mixed image for the current masks
  SoftLabel prediction; // teacher probabilities on mixed (tau = 1)
};

/// Loss and exact gradient with respect to the raw grid masks. The chain runs
/// teacher-backward -> per-plane image reduction -> upsampling adjoint ->
/// normalization Jacobian. The divergence and regularizer paths go through the
/// Jacobian separately and are summed afterwards, so when every input image is
/// identical the divergence component of the gradient is exactly zero and the
/// total reduces to the weighted regularizer gradient alone.
/// include_tv adds lambda_sigma * tv (the SGD baseline's objective).
ObjectiveEval supermix_loss_and_grad(const MaskGrid& raw, const MixInput& in,
                                     const ClassifierSpec& teacher, const SoftLabel& target,
                                     const ObjectiveConfig& cfg, bool include_tv = false);

}  // namespace supermix
