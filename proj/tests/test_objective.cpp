#include <cmath>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "supermix/classifier.hpp"
#include "supermix/mixing.hpp"
#include "supermix/objective.hpp"

using namespace supermix;

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

Tensor3 random_image(int w, int h, int c, Rng& rng) {
  Tensor3 t(w, h, c);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : t.data) v = u(rng);
  return t;
}

MaskGrid random_grid(int k, int gw, int gh, Rng& rng) {
  MaskGrid m(k, gw, gh);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (Field2& p : m.raw)
    for (double& v : p.data) v = u(rng);
  return m;
}

NormalizedMasks constant_masks(int k, int w, int h, const std::vector<double>& values) {
  NormalizedMasks nm;
  nm.k = k;
  for (int i = 0; i < k; ++i) nm.planes.emplace_back(w, h, values[i]);
  return nm;
}

}  // namespace

TEST_CASE("divergence hand values") {
  ObjectiveConfig cfg;
  SoftLabel f{{0.6, 0.4}};
  SUBCASE("target-first") {
    SoftLabel y{{1.0, 0.0}};
    CHECK(divergence(f, y, cfg) == doctest::Approx(-std::log(0.6)).epsilon(1e-14));
    SoftLabel y2{{0.4, 0.6}};
    double want = 0.4 * std::log(0.4 / 0.6) + 0.6 * std::log(0.6 / 0.4);
    CHECK(divergence(f, y2, cfg) == doctest::Approx(want).epsilon(1e-14));
  }
  SUBCASE("prediction-first") {
    cfg.divergence_direction = DivergenceDirection::PredictionFirst;
    SoftLabel y{{0.5, 0.5}};
    double want = 0.6 * std::log(0.6 / 0.5) + 0.4 * std::log(0.4 / 0.5);
    CHECK(divergence(f, y, cfg) == doctest::Approx(want).epsilon(1e-14));
  }
  SUBCASE("identical distributions give zero") {
    SoftLabel y{{0.6, 0.4}};
    CHECK(divergence(f, y, cfg) == 0.0);
    cfg.divergence_direction = DivergenceDirection::PredictionFirst;
    CHECK(divergence(f, y, cfg) == 0.0);
  }
  SUBCASE("inputs must be normalized") {
    SoftLabel bad{{0.7, 0.7}};
    CHECK_THROWS_AS(divergence(bad, f, cfg), std::invalid_argument);
    CHECK_THROWS_AS(divergence(f, bad, cfg), std::invalid_argument);
  }
}

TEST_CASE("divergence is nonnegative on random simplex pairs") {
  Rng rng(12);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    int m = 2 + int(rng() % 6);
    std::vector<double> a(m), b(m);
    double sa = 0.0, sb = 0.0;
    for (int j = 0; j < m; ++j) {
      a[j] = u(rng);
      b[j] = u(rng);
      sa += a[j];
      sb += b[j];
    }
    for (int j = 0; j < m; ++j) {
      a[j] /= sa;
      b[j] /= sb;
    }
    ObjectiveConfig cfg;
    cfg.divergence_direction =
        (trial % 2 == 0) ? DivergenceDirection::TargetFirst : DivergenceDirection::PredictionFirst;
    CHECK(divergence(SoftLabel{a}, SoftLabel{b}, cfg) >= 0.0);
  }
}

TEST_CASE("sparsity at uniform and binary masks") {
  CHECK(sparsity_loss(constant_masks(2, 4, 4, {0.5, 0.5})) == 0.25);
  CHECK(sparsity_loss(constant_masks(3, 4, 4, {1.0 / 3, 1.0 / 3, 1.0 / 3})) ==
        doctest::Approx(2.0 / 9.0).epsilon(1e-14));
  CHECK(sparsity_loss(constant_masks(2, 4, 4, {1.0, 0.0})) == 0.0);
  NormalizedMasks checker;
  checker.k = 2;
  checker.planes.assign(2, Field2(2, 2));
  checker.planes[0].data = {1.0, 0.0, 0.0, 1.0};
  checker.planes[1].data = {0.0, 1.0, 1.0, 0.0};
  CHECK(sparsity_loss(checker) == 0.0);
}

TEST_CASE("smoothness penalty on a hand-built pair of planes") {
  NormalizedMasks nm;
  nm.k = 2;
  nm.planes.assign(2, Field2(2, 2));
  nm.planes[0].data = {0.2, 0.8, 0.4, 0.6};
  nm.planes[1].data = {0.8, 0.2, 0.6, 0.4};
  // Forward differences per plane: dx {0.6, 0.2}, dy {0.2, -0.2}; cubed
  // magnitudes sum to 0.24 per plane, normalized by 2*2*2 entries.
  CHECK(tv_smoothness_loss(nm) == doctest::Approx(0.48 / 8.0).epsilon(1e-14));
  CHECK(tv_smoothness_loss(constant_masks(2, 5, 5, {0.3, 0.7})) == 0.0);
}

TEST_CASE("smoothness penalty is cubic in scale") {
  Rng rng(13);
  NormalizedMasks nm;
  nm.k = 2;
  nm.planes.assign(2, Field2(5, 4));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Field2& p : nm.planes)
    for (double& v : p.data) v = u(rng);
  NormalizedMasks scaled = nm;
  for (Field2& p : scaled.planes)
    for (double& v : p.data) v *= 2.0;
  CHECK(tv_smoothness_loss(scaled) == doctest::Approx(8.0 * tv_smoothness_loss(nm)).epsilon(1e-12));
}

TEST_CASE("scalar instance matches the closed form") {
  // 1x1 image, k = 2, softmax-regression teacher: everything reduces to
  // scalar formulas that are computed here independently.
  const double a = 0.2, b = 0.9, p = 0.3, q = -0.4, w0 = 1.5, w1 = -0.7;
  Rng rng(1);
  ClassifierSpec teacher = make_classifier(Arch::SoftmaxRegression, 1, 1, 1, 2, {}, rng);
  REQUIRE(teacher.params[0].name == "weight");
  teacher.params[0].values = {w0, w1};
  teacher.params[1].values = {0.0, 0.0};

  MixInput in;
  in.images.emplace_back(1, 1, 1, a);
  in.images.emplace_back(1, 1, 1, b);
  in.teacher_classes = {0, 1};
  in.weights = {0.4, 0.6};
  SoftLabel target{{0.4, 0.6}};

  MaskGrid raw(2, 1, 1);
  raw.raw[0].data[0] = p;
  raw.raw[1].data[0] = q;

  ObjectiveConfig cfg;
  cfg.lambda_s = 25.0;
  ObjectiveEval ev = supermix_loss_and_grad(raw, in, teacher, target, cfg);

  const double s0 = sigmoid(p), s1 = sigmoid(q), S = s0 + s1;
  const double m0 = s0 / S, m1 = s1 / S;
  const double xhat = m0 * a + m1 * b;
  const double z0 = w0 * xhat, z1 = w1 * xhat;
  const double e0 = std::exp(z0 - std::max(z0, z1)), e1 = std::exp(z1 - std::max(z0, z1));
  const double f0 = e0 / (e0 + e1), f1 = e1 / (e0 + e1);

  const double kl = 0.4 * std::log(0.4 / f0) + 0.6 * std::log(0.6 / f1);
  const double sp = m0 * m1;
  CHECK(ev.mixed.data[0] == doctest::Approx(xhat).epsilon(1e-15));
  CHECK(ev.prediction.probs[0] == doctest::Approx(f0).epsilon(1e-14));
  CHECK(ev.loss.kl == doctest::Approx(kl).epsilon(1e-13));
  CHECK(ev.loss.sparsity == doctest::Approx(sp).epsilon(1e-14));
  CHECK(ev.loss.tv == 0.0);
  CHECK(ev.loss.total == doctest::Approx(kl + 25.0 * sp).epsilon(1e-13));

  const double dxhat = (f0 - 0.4) * w0 + (f1 - 0.6) * w1;
  const double B0 = dxhat * a, B1 = dxhat * b;
  const double s0p = s0 * (1.0 - s0), s1p = s1 * (1.0 - s1);
  const double dkl_dp = (s0p / (S * S)) * s1 * (B0 - B1);
  const double dkl_dq = (s1p / (S * S)) * s0 * (B1 - B0);
  // Sparsity: both entries sit below 1/2 the parabola, d|m(m-1)|/dm = 1-2m,
  // averaged over the 2 entries.
  const double D0 = (1.0 - 2.0 * m0) / 2.0, D1 = (1.0 - 2.0 * m1) / 2.0;
  const double dsp_dp = (s0p / (S * S)) * s1 * (D0 - D1);
  const double dsp_dq = (s1p / (S * S)) * s0 * (D1 - D0);
  CHECK(ev.grad.raw[0].data[0] == doctest::Approx(dkl_dp + 25.0 * dsp_dp).epsilon(1e-12));
  CHECK(ev.grad.raw[1].data[0] == doctest::Approx(dkl_dq + 25.0 * dsp_dq).epsilon(1e-12));
}

TEST_CASE("identical inputs zero the divergence gradient exactly") {
  Rng rng(14);
  Tensor3 x = random_image(6, 6, 1, rng);
  MixInput in;
  in.images = {x, x};
  in.teacher_classes = {0, 1};
  in.weights = {0.5, 0.5};
  ClassifierSpec teacher = make_classifier(Arch::Mlp, 6, 6, 1, 3, {7}, rng);
  in.teacher_classes = {0, 1};
  SoftLabel target{{0.5, 0.5, 0.0}};
  MaskGrid raw = random_grid(2, 3, 3, rng);
  ObjectiveConfig cfg;
  cfg.lambda_s = 0.0;
  ObjectiveEval ev = supermix_loss_and_grad(raw, in, teacher, target, cfg);
  for (const Field2& plane : ev.grad.raw)
    for (double v : plane.data) CHECK(v == 0.0);
}

TEST_CASE("gradient matches central differences") {
  Rng rng(15);
  ObjectiveConfig cfg;
  cfg.lambda_s = 25.0;
  cfg.lambda_sigma = 250.0;
  for (bool include_tv : {false, true}) {
    for (int arch_i = 0; arch_i < 2; ++arch_i) {
      ClassifierSpec teacher =
          (arch_i == 0) ? make_classifier(Arch::SoftmaxRegression, 6, 5, 2, 3, {}, rng)
                        : make_classifier(Arch::Mlp, 6, 5, 2, 3, {6}, rng);
      MixInput in;
      in.images = {random_image(6, 5, 2, rng), random_image(6, 5, 2, rng)};
      in.teacher_classes = {0, 2};
      in.weights = {0.35, 0.65};
      SoftLabel target = target_soft_label(in.teacher_classes, in.weights, 3);
      MaskGrid raw = random_grid(2, 3, 3, rng);
      ObjectiveEval ev = supermix_loss_and_grad(raw, in, teacher, target, cfg, include_tv);
      const double h = 1e-5;
      for (int plane = 0; plane < 2; ++plane) {
        for (std::size_t cell = 0; cell < raw.raw[plane].data.size(); ++cell) {
          MaskGrid up = raw, dn = raw;
          up.raw[plane].data[cell] += h;
          dn.raw[plane].data[cell] -= h;
          double fu = supermix_loss_and_grad(up, in, teacher, target, cfg, include_tv).loss.total;
          double fd = supermix_loss_and_grad(dn, in, teacher, target, cfg, include_tv).loss.total;
          double want = (fu - fd) / (2.0 * h);
          double got = ev.grad.raw[plane].data[cell];
          CHECK(got == doctest::Approx(want).epsilon(1e-5));
        }
      }
    }
  }
}

TEST_CASE("objective config validation") {
  ObjectiveConfig cfg;
  CHECK_NOTHROW(validate_objective_config(cfg));
  cfg.lambda_s = -1.0;
  CHECK_THROWS_AS(validate_objective_config(cfg), std::invalid_argument);
  cfg = ObjectiveConfig{};
  cfg.kl_epsilon = 0.1;
  CHECK_THROWS_AS(validate_objective_config(cfg), std::invalid_argument);
}
