#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "supermix/dataset.hpp"
#include "supermix/optimizer.hpp"

namespace supermix {

/// Deterministic per-index random stream: two indices with the same (seed,
/// index) always yield the same stream, so batch construction can run on any
/// number of workers without changing results.
Rng per_index_rng(uint64_t seed, uint64_t index);

struct BuildConfig {
  SuperMixConfig mix;
  double kappa = 5.0;                  // |D'| = floor(kappa * |D|) candidates
  double teacher_accuracy_floor = 0.5; // refuse teachers below this on D
  bool drop_unconverged = false;       // default keeps flagged samples
  bool store_soft_labels = true;
  double soft_label_tau = 4.0;         // temperature of the stored soft labels
  int workers = 0;                     // 0 -> default; never changes results
};

/// Builds the mixed dataset D' from uniformly drawn k-subsets of D. Every
/// stored image is storage-quantized first; pseudo classes and soft labels
/// are computed on the quantized image, so reloading the file and recomputing
/// the teacher argmax reproduces the stored labels bit-for-bit. MixUp and
/// CutMix draw pairs (k = 2) regardless of cfg.mix.k.
MixedDataset build_mixed_dataset(const LabeledDataset& d, const ClassifierSpec& teacher,
                                 MixMethod method, const BuildConfig& cfg, uint64_t seed);

/// Mean cross-entropy of the student on d (hard labels) plus mean
/// cross-entropy on d_prime (pseudo classes), unit weights on both terms.
/// Either dataset may be empty; both empty is an error.
double ce_objective(const ClassifierSpec& student, const LabeledDataset& d,
                    const MixedDataset& d_prime);

/// H(p, q) = -sum_j p_j log q_j, with log flooring at 1e-12.
double cross_entropy(const SoftLabel& p, const SoftLabel& q);

/// (1 - lambda_kd) * H(onehot(y), f_S(x, 1)) +
/// lambda_kd * tau^2 * H(f_T(x, tau), f_S(x, tau)).
double kd_objective(const ClassifierSpec& teacher, const ClassifierSpec& student,
                    const Tensor3& x, int y, double tau, double lambda_kd);

enum class DistillObjective { Ce, Kd, KdMixed };

std::string to_string(DistillObjective o);
DistillObjective distill_objective_from_string(const std::string& s);

struct DistillConfig {
  DistillObjective objective = DistillObjective::Ce;
  TrainSchedule schedule;  // epochs count passes over d
  double tau = 4.0;
  double lambda_kd = 0.1;
};

struct DistillMetrics {
  std::vector<EpochStats> train;  // loss/accuracy of the d stream per epoch
  std::vector<double> test_top1;  // filled when a testset is supplied
};

/// Trains the student. Ce realizes the two-term cross-entropy objective on d
/// and d_prime; Kd is temperature distillation on d alone (d_prime ignored);
/// KdMixed additionally applies the distillation objective to mixed batches,
/// using the stored soft labels when their temperature matches cfg.tau and
/// re-inferring with the teacher otherwise. When mixed data is active the
/// loop alternates one d batch with one d_prime batch, so |D'| = kappa * |D|
/// receives 1/kappa as many passes as d. teacher may be null for Ce.
ClassifierSpec distill(ClassifierSpec student, const ClassifierSpec* teacher,
                       const LabeledDataset& d, const MixedDataset& d_prime,
                       const DistillConfig& cfg, Rng& rng,
                       const LabeledDataset* testset = nullptr,
                       DistillMetrics* metrics = nullptr);

struct EvalResult {
  double top1 = 0.0;
  std::optional<double> top5;  // present when the class count is >= 5
};

EvalResult evaluate(const ClassifierSpec& model, const LabeledDataset& testset, int workers = 0);

/// Per image: model probabilities sorted descending, truncated to top_n;
/// entries averaged across images. Nonincreasing, sums to <= 1.
std::vector<double> smoothness_profile(const ClassifierSpec& model,
                                       const std::vector<Tensor3>& images, int top_n,
                                       int workers = 0);

/// Writes <stem>.png (the mixed image) and <stem>.mask<i>.png (one grayscale
/// panel per mask plane) for visual inspection.
void export_mix_panel(const std::string& stem, const MixResult& result,
                      const std::string& config_echo);

}  // namespace supermix
