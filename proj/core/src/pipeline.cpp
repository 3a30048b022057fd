#include "supermix/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "supermix/parallel.hpp"
#include "supermix/png_io.hpp"

namespace supermix {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

Rng per_index_rng(uint64_t seed, uint64_t index) {
  return Rng(splitmix64(seed ^ splitmix64(index + 1)));
}

// ---------------------------------------------------------------------------
// Mixed-dataset construction
// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> draw_distinct(std::size_t n, int k, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> out;
  out.reserve(k);
  while (static_cast<int>(out.size()) < k) {
    std::size_t c = pick(rng);
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  }
  return out;
}

struct MixCandidate {
  Tensor3 image;
  int pseudo_class = 0;
  std::vector<double> soft_label;
  int iterations = 0;
  uint8_t converged = 1;
};

}  // namespace

MixedDataset build_mixed_dataset(const LabeledDataset& d, const ClassifierSpec& teacher,
                                 MixMethod method, const BuildConfig& cfg, uint64_t seed) {
  validate_supermix_config(cfg.mix);
  if (cfg.kappa < 0.0) throw std::invalid_argument("build_mixed_dataset: kappa must be >= 0");
  if (d.images.empty()) throw std::invalid_argument("build_mixed_dataset: empty source dataset");
  if (d.classes != teacher.classes)
    throw std::invalid_argument("build_mixed_dataset: teacher/dataset class count mismatch");
  const int k = method == MixMethod::SuperMix ? cfg.mix.k : 2;
  if (static_cast<std::size_t>(k) > d.images.size())
    throw std::invalid_argument("build_mixed_dataset: fewer images than k");

  const double teacher_top1 = evaluate(teacher, d, cfg.workers).top1;
  if (teacher_top1 < cfg.teacher_accuracy_floor) {
    std::ostringstream msg;
    msg << "build_mixed_dataset: teacher accuracy " << teacher_top1
        << " on the source dataset is below the configured floor " << cfg.teacher_accuracy_floor
        << "; train the teacher first";
    throw std::runtime_error(msg.str());
  }

  const std::size_t count =
      static_cast<std::size_t>(std::floor(cfg.kappa * static_cast<double>(d.images.size())));
  std::vector<MixCandidate> candidates(count);

  parallel_for(count, cfg.workers, [&](std::size_t i) {
    Rng rng = per_index_rng(seed, i);
    MixCandidate& out = candidates[i];
    std::vector<std::size_t> idx = draw_distinct(d.images.size(), k, rng);

    if (method == MixMethod::SuperMix) {
      MixInput in;
      for (std::size_t j : idx) in.images.push_back(d.images[j]);
      MixResult res = supermix(std::move(in), teacher, cfg.mix, rng);
      out.image = std::move(res.mixed);
      out.iterations = res.iterations;
      out.converged = res.converged ? 1 : 0;
    } else {
      const Tensor3& x0 = d.images[idx[0]];
      const Tensor3& x1 = d.images[idx[1]];
      PairMixResult res = method == MixMethod::MixUp
                              ? mixup(x0, 0, x1, 1, 2, cfg.mix.alpha, rng)
                              : cutmix(x0, 0, x1, 1, 2, cfg.mix.alpha, rng);
      out.image = std::move(res.image);
    }

    // Labels are derived from the storage-quantized image so a file
    // round-trip reproduces them exactly.
    quantize_to_storage(out.image);
    Logits z = forward(teacher, out.image);
    out.pseudo_class = argmax_index(z.values);
    if (cfg.store_soft_labels)
      out.soft_label = tempered_softmax(z, cfg.soft_label_tau).probs;
  });

  MixedDataset out;
  out.provenance = method;
  out.classes = teacher.classes;
  out.soft_label_tau = cfg.soft_label_tau;
  for (MixCandidate& c : candidates) {
    if (cfg.drop_unconverged && !c.converged) continue;
    out.images.push_back(std::move(c.image));
    out.pseudo_classes.push_back(c.pseudo_class);
    if (cfg.store_soft_labels) out.soft_labels.push_back(std::move(c.soft_label));
    out.iterations.push_back(c.iterations);
    out.converged.push_back(c.converged);
  }
  out.kappa = static_cast<double>(out.images.size()) / static_cast<double>(d.images.size());
  return out;
}

// ---------------------------------------------------------------------------
// Training objectives
// ---------------------------------------------------------------------------

double cross_entropy(const SoftLabel& p, const SoftLabel& q) {
  if (p.probs.size() != q.probs.size())
    throw std::invalid_argument("cross_entropy: length mismatch");
  double h = 0.0;
  for (std::size_t j = 0; j < p.probs.size(); ++j)
    if (p.probs[j] > 0.0) h -= p.probs[j] * std::log(std::max(q.probs[j], 1e-12));
  return h;
}

namespace {

// Stable -log softmax(z)[y].
double nll(const Logits& z, int y) {
  double zmax = *std::max_element(z.values.begin(), z.values.end());
  double sum = 0.0;
  for (double v : z.values) sum += std::exp(v - zmax);
  return std::log(sum) + zmax - z.values[y];
}

}  // namespace

double ce_objective(const ClassifierSpec& student, const LabeledDataset& d,
                    const MixedDataset& d_prime) {
  if (d.images.empty() && d_prime.images.empty())
    throw std::invalid_argument("ce_objective: both batches empty");
  double total = 0.0;
  if (!d.images.empty()) {
    double sum = 0.0;
    for (std::size_t i = 0; i < d.images.size(); ++i)
      sum += nll(forward(student, d.images[i]), d.labels[i]);
    total += sum / static_cast<double>(d.images.size());
  }
  if (!d_prime.images.empty()) {
    double sum = 0.0;
    for (std::size_t i = 0; i < d_prime.images.size(); ++i)
      sum += nll(forward(student, d_prime.images[i]), d_prime.pseudo_classes[i]);
    total += sum / static_cast<double>(d_prime.images.size());
  }
  return total;
}

double kd_objective(const ClassifierSpec& teacher, const ClassifierSpec& student,
                    const Tensor3& x, int y, double tau, double lambda_kd) {
  if (!(tau > 0.0)) throw std::invalid_argument("kd_objective: tau must be positive");
  if (lambda_kd < 0.0 || lambda_kd > 1.0)
    throw std::invalid_argument("kd_objective: lambda_kd must lie in [0,1]");
  Logits zs = forward(student, x);
  const double hard = nll(zs, y);
  SoftLabel t = tempered_softmax(forward(teacher, x), tau);
  SoftLabel s = tempered_softmax(zs, tau);
  return (1.0 - lambda_kd) * hard + lambda_kd * tau * tau * cross_entropy(t, s);
}

// ---------------------------------------------------------------------------
// Distillation loop
// ---------------------------------------------------------------------------

std::string to_string(DistillObjective o) {
  switch (o) {
    case DistillObjective::Ce: return "ce";
    case DistillObjective::Kd: return "kd";
    case DistillObjective::KdMixed: return "kd+mixed";
  }
  return "unknown";
}

DistillObjective distill_objective_from_string(const std::string& s) {
  if (s == "ce") return DistillObjective::Ce;
  if (s == "kd") return DistillObjective::Kd;
  if (s == "kd+mixed") return DistillObjective::KdMixed;
  throw std::invalid_argument("unknown distill objective: " + s);
}

namespace {

// One deterministic SGD step over a batch: per-sample gradients are computed
// in a fixed number of buckets and reduced in bucket order, so the result is
// independent of the worker count. dz_fn fills the logits gradient for batch
// slot `b` and returns the sample loss. hard_labels, when non-null, are used
// for the accuracy tally only.
struct StepStats {
  double loss_sum = 0.0;
  std::size_t correct = 0;
};

StepStats sgd_batch_step(ClassifierSpec& model, const std::vector<const Tensor3*>& batch,
                         const std::function<double(std::size_t, const Logits&,
                                                    std::vector<double>&)>& dz_fn,
                         const std::vector<int>* hard_labels, double lr, double momentum,
                         double weight_decay, int workers,
                         std::vector<std::vector<double>>& velocity) {
  constexpr int kBuckets = 8;
  struct Bucket {
    ParamGrads grads;
    StepStats stats;
  };
  std::vector<Bucket> buckets(kBuckets);
  for (Bucket& b : buckets) b.grads = zero_grads(model);

  parallel_for(kBuckets, workers, [&](std::size_t bi) {
    Bucket& bucket = buckets[bi];
    std::vector<double> dz;
    for (std::size_t j = bi; j < batch.size(); j += kBuckets) {
      ForwardCache cache;
      Logits z = forward_cached(model, *batch[j], cache);
      bucket.stats.loss_sum += dz_fn(j, z, dz);
      if (hard_labels && argmax_index(z.values) == (*hard_labels)[j]) ++bucket.stats.correct;
      backward_params(model, *batch[j], cache, dz, bucket.grads);
    }
  });

  ParamGrads total = std::move(buckets[0].grads);
  StepStats stats = buckets[0].stats;
  for (int bi = 1; bi < kBuckets; ++bi) {
    for (std::size_t b = 0; b < total.blocks.size(); ++b)
      for (std::size_t i = 0; i < total.blocks[b].size(); ++i)
        total.blocks[b][i] += buckets[bi].grads.blocks[b][i];
    stats.loss_sum += buckets[bi].stats.loss_sum;
    stats.correct += buckets[bi].stats.correct;
  }
  apply_sgd_step(model, total, lr, momentum, weight_decay,
                 1.0 / static_cast<double>(batch.size()), velocity);
  return stats;
}

// softmax at tau=1 minus a one-hot target.
void hard_dz(const Logits& z, int y, std::vector<double>& dz) {
  double zmax = *std::max_element(z.values.begin(), z.values.end());
  double sum = 0.0;
  dz.resize(z.values.size());
  for (std::size_t c = 0; c < z.values.size(); ++c) {
    dz[c] = std::exp(z.values[c] - zmax);
    sum += dz[c];
  }
  for (std::size_t c = 0; c < z.values.size(); ++c) dz[c] /= sum;
  dz[y] -= 1.0;
}

// Gradient of (1-l)*H(onehot y, s(z,1)) + l*tau^2*H(t, s(z,tau)) w.r.t. z:
// (1-l)*(s(z,1) - onehot) + l*tau*(s(z,tau) - t).
double kd_dz(const Logits& z, int y, const std::vector<double>& teacher_tau, double tau,
             double lambda, std::vector<double>& dz) {
  hard_dz(z, y, dz);
  const double hard = nll(z, y);
  SoftLabel s = tempered_softmax(z, tau);
  double soft = 0.0;
  for (std::size_t c = 0; c < dz.size(); ++c) {
    dz[c] = (1.0 - lambda) * dz[c] + lambda * tau * (s.probs[c] - teacher_tau[c]);
    if (teacher_tau[c] > 0.0) soft -= teacher_tau[c] * std::log(std::max(s.probs[c], 1e-12));
  }
  return (1.0 - lambda) * hard + lambda * tau * tau * soft;
}

}  // namespace

ClassifierSpec distill(ClassifierSpec student, const ClassifierSpec* teacher,
                       const LabeledDataset& d, const MixedDataset& d_prime,
                       const DistillConfig& cfg, Rng& rng, const LabeledDataset* testset,
                       DistillMetrics* metrics) {
  validate_classifier(student);
  if (d.images.empty()) throw std::invalid_argument("distill: empty training set");
  if (d.classes != student.classes)
    throw std::invalid_argument("distill: student/dataset class count mismatch");
  if (!d_prime.images.empty() && d_prime.classes != student.classes)
    throw std::invalid_argument("distill: mixed dataset class count mismatch");
  const bool needs_teacher = cfg.objective != DistillObjective::Ce;
  if (needs_teacher) {
    if (!teacher) throw std::invalid_argument("distill: objective requires a teacher");
    if (teacher->classes != student.classes)
      throw std::invalid_argument("distill: teacher class count mismatch");
  }
  if (!(cfg.tau > 0.0)) throw std::invalid_argument("distill: tau must be positive");
  if (cfg.lambda_kd < 0.0 || cfg.lambda_kd > 1.0)
    throw std::invalid_argument("distill: lambda_kd must lie in [0,1]");
  const TrainSchedule& s = cfg.schedule;
  if (s.batch < 1 || s.epochs < 0) throw std::invalid_argument("distill: bad schedule");

  const bool use_mixed = !d_prime.images.empty() && cfg.objective != DistillObjective::Kd;

  // Teacher inference is frozen, so tempered targets are computed once.
  std::vector<std::vector<double>> teacher_on_d;
  if (needs_teacher) {
    teacher_on_d.resize(d.images.size());
    parallel_for(d.images.size(), s.workers, [&](std::size_t i) {
      teacher_on_d[i] = tempered_softmax(forward(*teacher, d.images[i]), cfg.tau).probs;
    });
  }
  std::vector<std::vector<double>> mixed_soft;
  if (use_mixed && cfg.objective == DistillObjective::KdMixed) {
    if (!d_prime.soft_labels.empty() && d_prime.soft_label_tau == cfg.tau) {
      mixed_soft = d_prime.soft_labels;
    } else {
      if (!teacher)
        throw std::invalid_argument("distill: stored soft labels unusable and no teacher given");
      mixed_soft.resize(d_prime.images.size());
      parallel_for(d_prime.images.size(), s.workers, [&](std::size_t i) {
        mixed_soft[i] = tempered_softmax(forward(*teacher, d_prime.images[i]), cfg.tau).probs;
      });
    }
  }

  std::vector<std::size_t> d_order(d.images.size());
  std::iota(d_order.begin(), d_order.end(), 0);
  std::vector<std::size_t> dp_order(d_prime.images.size());
  std::iota(dp_order.begin(), dp_order.end(), 0);
  std::size_t dp_cursor = 0;
  if (use_mixed) std::shuffle(dp_order.begin(), dp_order.end(), rng);

  std::vector<std::vector<double>> velocity;
  if (metrics) {
    metrics->train.clear();
    metrics->test_top1.clear();
  }

  for (int epoch = 0; epoch < s.epochs; ++epoch) {
    double lr = s.lr;
    for (int ms : s.milestones)
      if (ms <= epoch) lr *= s.lr_decay;

    std::shuffle(d_order.begin(), d_order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t epoch_correct = 0;

    for (std::size_t start = 0; start < d.images.size(); start += s.batch) {
      const std::size_t count = std::min<std::size_t>(s.batch, d.images.size() - start);
      std::vector<const Tensor3*> batch(count);
      std::vector<int> labels(count);
      for (std::size_t j = 0; j < count; ++j) {
        batch[j] = &d.images[d_order[start + j]];
        labels[j] = d.labels[d_order[start + j]];
      }

      auto d_dz = [&](std::size_t j, const Logits& z, std::vector<double>& dz) -> double {
        if (cfg.objective == DistillObjective::Ce) {
          hard_dz(z, labels[j], dz);
          return nll(z, labels[j]);
        }
        return kd_dz(z, labels[j], teacher_on_d[d_order[start + j]], cfg.tau, cfg.lambda_kd, dz);
      };
      StepStats st = sgd_batch_step(student, batch, d_dz, &labels, lr, s.momentum,
                                    s.weight_decay, s.workers, velocity);
      epoch_loss += st.loss_sum;
      epoch_correct += st.correct;

      if (use_mixed) {
        std::vector<const Tensor3*> mbatch(count);
        std::vector<int> mlabels(count);
        std::vector<std::size_t> midx(count);
        for (std::size_t j = 0; j < count; ++j) {
          if (dp_cursor == dp_order.size()) {
            std::shuffle(dp_order.begin(), dp_order.end(), rng);
            dp_cursor = 0;
          }
          midx[j] = dp_order[dp_cursor++];
          mbatch[j] = &d_prime.images[midx[j]];
          mlabels[j] = d_prime.pseudo_classes[midx[j]];
        }
        auto dp_dz = [&](std::size_t j, const Logits& z, std::vector<double>& dz) -> double {
          if (cfg.objective == DistillObjective::KdMixed)
            return kd_dz(z, mlabels[j], mixed_soft[midx[j]], cfg.tau, cfg.lambda_kd, dz);
          hard_dz(z, mlabels[j], dz);
          return nll(z, mlabels[j]);
        };
        sgd_batch_step(student, mbatch, dp_dz, nullptr, lr, s.momentum, s.weight_decay,
                       s.workers, velocity);
      }
    }

    if (metrics) {
      metrics->train.push_back({epoch_loss / static_cast<double>(d.images.size()),
                                static_cast<double>(epoch_correct) /
                                    static_cast<double>(d.images.size())});
      if (testset) metrics->test_top1.push_back(evaluate(student, *testset, s.workers).top1);
    }
  }
  return student;
}

// ---------------------------------------------------------------------------
// Evaluation and analysis
// ---------------------------------------------------------------------------

EvalResult evaluate(const ClassifierSpec& model, const LabeledDataset& testset, int workers) {
  if (testset.images.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (testset.images.size() != testset.labels.size())
    throw std::invalid_argument("evaluate: image/label count mismatch");

  const std::size_t n = testset.images.size();
  std::vector<uint8_t> hit1(n, 0), hit5(n, 0);
  const bool want_top5 = model.classes >= 5;

  parallel_for(n, workers, [&](std::size_t i) {
    Logits z = forward(model, testset.images[i]);
    const int y = testset.labels[i];
    if (argmax_index(z.values) == y) hit1[i] = 1;
    if (want_top5) {
      // Rank of y: strictly larger logits, plus equal logits at lower index.
      int rank = 0;
      for (int c = 0; c < model.classes; ++c)
        if (z.values[c] > z.values[y] || (z.values[c] == z.values[y] && c < y)) ++rank;
      if (rank < 5) hit5[i] = 1;
    }
  });

  EvalResult out;
  out.top1 = static_cast<double>(std::accumulate(hit1.begin(), hit1.end(), std::size_t{0})) /
             static_cast<double>(n);
  if (want_top5)
    out.top5 = static_cast<double>(std::accumulate(hit5.begin(), hit5.end(), std::size_t{0})) /
               static_cast<double>(n);
  return out;
}

std::vector<double> smoothness_profile(const ClassifierSpec& model,
                                       const std::vector<Tensor3>& images, int top_n,
                                       int workers) {
  if (images.empty()) throw std::invalid_argument("smoothness_profile: no images");
  if (top_n < 1 || top_n > model.classes)
    throw std::invalid_argument("smoothness_profile: top_n must lie in [1, classes]");

  std::vector<std::vector<double>> rows(images.size());
  parallel_for(images.size(), workers, [&](std::size_t i) {
    SoftLabel p = tempered_softmax(forward(model, images[i]), 1.0);
    std::sort(p.probs.begin(), p.probs.end(), std::greater<double>());
    p.probs.resize(top_n);
    rows[i] = std::move(p.probs);
  });

  std::vector<double> profile(top_n, 0.0);
  for (const auto& row : rows)
    for (int j = 0; j < top_n; ++j) profile[j] += row[j];
  for (double& v : profile) v /= static_cast<double>(images.size());
  return profile;
}

void export_mix_panel(const std::string& stem, const MixResult& result,
                      const std::string& config_echo) {
  write_png(stem + ".png", result.mixed, config_echo);
  for (int i = 0; i < result.masks.k; ++i)
    write_png(stem + ".mask" + std::to_string(i) + ".png", result.masks.planes[i], 0.0, 1.0,
              config_echo);
}

}  // namespace supermix
