#pragma once

#include <string>
#include <vector>

#include "supermix/dataset.hpp"
#include "supermix/tensor.hpp"

namespace supermix {

struct Logits {
  std::vector<double> values;
};

/// Probability vector over classes; entries are nonnegative and sum to 1.
struct SoftLabel {
  std::vector<double> probs;
};

enum class Arch { SoftmaxRegression, Mlp, TinyCnn };

std::string to_string(Arch a);
Arch arch_from_string(const std::string& s);

struct ParamBlock {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;
};

/// A reference classifier: linear softmax regression, a tanh MLP, or a
/// two-stage 3x3-conv network (tanh, 2x2 average pooling, linear head).
/// `hidden` holds the MLP layer sizes or the two conv filter counts.
struct ClassifierSpec {
  Arch arch = Arch::SoftmaxRegression;
  int width = 0, height = 0, channels = 0, classes = 0;
  std::vector<int> hidden;
  std::vector<ParamBlock> params;
};

/// Builds a classifier with consistent parameter shapes. Softmax regression
/// starts at zero; the other architectures use Glorot-uniform draws from rng.
ClassifierSpec make_classifier(Arch arch, int width, int height, int channels, int classes,
                               const std::vector<int>& hidden, Rng& rng);

/// Throws invalid_argument when the parameter blocks do not match the
/// architecture and dimensions.
void validate_classifier(const ClassifierSpec& model);

/// Intermediate activations captured during a forward pass, consumed by the
/// backward passes. Post-activation values only; tanh' = 1 - a^2.
struct ForwardCache {
  std::vector<std::vector<double>> dense;  // MLP hidden activations
  std::vector<Tensor3> maps;               // conv/pool feature maps
};

Logits forward(const ClassifierSpec& model, const Tensor3& x);
Logits forward_cached(const ClassifierSpec& model, const Tensor3& x, ForwardCache& cache);

/// probs_j = exp(z_j / tau) / sum_l exp(z_l / tau), max-subtracted.
SoftLabel tempered_softmax(const Logits& z, double tau);

/// Index of the maximum logit; ties resolve to the lowest index.
int predict_class(const ClassifierSpec& model, const Tensor3& x);
int argmax_index(const std::vector<double>& values);

/// Exact reverse-mode dL/dx for the upstream gradient dL_dlogits.
Tensor3 backward_to_input(const ClassifierSpec& model, const Tensor3& x,
                          const std::vector<double>& dL_dlogits);

/// Parameter gradients, block-for-block parallel to ClassifierSpec::params.
struct ParamGrads {
  std::vector<std::vector<double>> blocks;
};

ParamGrads zero_grads(const ClassifierSpec& model);

/// Accumulates this sample's parameter gradients into grads. cache must come
/// from forward_cached on the same (model, x).
void backward_params(const ClassifierSpec& model, const Tensor3& x, const ForwardCache& cache,
                     const std::vector<double>& dL_dlogits, ParamGrads& grads);

/// One SGD-with-momentum step: v = momentum*v + scale*g + weight_decay*w,
/// then w -= lr*v. scale folds in the 1/batch averaging.
void apply_sgd_step(ClassifierSpec& model, const ParamGrads& grads, double lr, double momentum,
                    double weight_decay, double scale, std::vector<std::vector<double>>& velocity);

struct TrainSchedule {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int epochs = 10;
  int batch = 32;
  std::vector<int> milestones;  // 0-based epochs; lr *= lr_decay once per milestone <= epoch
  double lr_decay = 0.1;
  int workers = 0;  // 0 -> default_worker_count(); results do not depend on it
};

struct EpochStats {
  double loss = 0.0;      // mean cross-entropy over the epoch
  double accuracy = 0.0;  // training accuracy measured before each update
};

struct TrainTrace {
  std::vector<EpochStats> epochs;
};

/// Mini-batch SGD with momentum on cross-entropy. Deterministic given the
/// model, data, schedule, and rng; worker count never changes the result.
ClassifierSpec train_classifier(ClassifierSpec model, const LabeledDataset& data,
                                const TrainSchedule& schedule, Rng& rng,
                                TrainTrace* trace = nullptr);

}  // namespace supermix
