#include <cmath>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "supermix/classifier.hpp"
#include "supermix/dataset.hpp"

using namespace supermix;

namespace {

Tensor3 random_image(int w, int h, int c, Rng& rng) {
  Tensor3 t(w, h, c);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : t.data) v = u(rng);
  return t;
}

// Two linearly separable classes: the bright half of the image flips side.
LabeledDataset separable_data(int count, Rng& rng) {
  LabeledDataset d;
  d.classes = 2;
  d.split = Split::Train;
  std::uniform_real_distribution<double> u(0.0, 0.2);
  for (int i = 0; i < count; ++i) {
    int label = i % 2;
    Tensor3 x(4, 4, 1);
    for (int y = 0; y < 4; ++y)
      for (int xx = 0; xx < 4; ++xx)
        x.at(xx, y, 0) = u(rng) + ((label == 0) == (xx < 2) ? 0.7 : 0.0);
    d.images.push_back(x);
    d.labels.push_back(label);
  }
  return d;
}

double scalar_loss(const ClassifierSpec& model, const Tensor3& x, const std::vector<double>& c) {
  Logits z = forward(model, x);
  double s = 0.0;
  for (std::size_t j = 0; j < c.size(); ++j) s += c[j] * z.values[j];
  return s;
}

}  // namespace

TEST_CASE("architectures build with matching shapes") {
  Rng rng(31);
  ClassifierSpec sm = make_classifier(Arch::SoftmaxRegression, 8, 8, 3, 4, {}, rng);
  REQUIRE(sm.params.size() == 2);
  CHECK(sm.params[0].values.size() == 4u * 8 * 8 * 3);
  for (double v : sm.params[0].values) CHECK(v == 0.0);

  ClassifierSpec mlp = make_classifier(Arch::Mlp, 8, 8, 3, 4, {10, 6}, rng);
  REQUIRE(mlp.params.size() == 6);
  CHECK(mlp.params[0].values.size() == 10u * 8 * 8 * 3);
  CHECK(mlp.params[4].values.size() == 4u * 6);

  ClassifierSpec cnn = make_classifier(Arch::TinyCnn, 8, 8, 3, 4, {5, 7}, rng);
  REQUIRE(cnn.params.size() == 6);
  CHECK(cnn.params[0].values.size() == 5u * 3 * 9);
  CHECK(cnn.params[2].values.size() == 7u * 5 * 9);
  CHECK(cnn.params[4].values.size() == 4u * 7 * 2 * 2);

  CHECK_NOTHROW(validate_classifier(sm));
  CHECK_NOTHROW(validate_classifier(mlp));
  CHECK_NOTHROW(validate_classifier(cnn));

  SUBCASE("validation catches shape drift") {
    mlp.params[1].values.push_back(0.0);
    CHECK_THROWS_AS(validate_classifier(mlp), std::invalid_argument);
  }
  SUBCASE("tiny-cnn needs dimensions divisible by four") {
    CHECK_THROWS_AS(make_classifier(Arch::TinyCnn, 6, 8, 1, 2, {4, 4}, rng),
                    std::invalid_argument);
  }
  SUBCASE("tiny-cnn needs exactly two filter counts") {
    CHECK_THROWS_AS(make_classifier(Arch::TinyCnn, 8, 8, 1, 2, {4}, rng), std::invalid_argument);
  }
}

TEST_CASE("softmax regression logits are an explicit dot product") {
  Rng rng(32);
  ClassifierSpec m = make_classifier(Arch::SoftmaxRegression, 2, 1, 1, 2, {}, rng);
  m.params[0].values = {0.5, -1.0, 2.0, 0.25};  // row-major [class][pixel]
  m.params[1].values = {0.1, -0.2};
  Tensor3 x(2, 1, 1);
  x.at(0, 0, 0) = 0.8;
  x.at(1, 0, 0) = 0.3;
  Logits z = forward(m, x);
  CHECK(z.values[0] == doctest::Approx(0.5 * 0.8 - 1.0 * 0.3 + 0.1).epsilon(1e-15));
  CHECK(z.values[1] == doctest::Approx(2.0 * 0.8 + 0.25 * 0.3 - 0.2).epsilon(1e-15));
}

TEST_CASE("zero parameters predict the uniform distribution") {
  Rng rng(33);
  ClassifierSpec m = make_classifier(Arch::SoftmaxRegression, 4, 4, 2, 5, {}, rng);
  Tensor3 x = random_image(4, 4, 2, rng);
  Logits z = forward(m, x);
  for (double v : z.values) CHECK(v == 0.0);
  SoftLabel p = tempered_softmax(z, 1.0);
  for (double v : p.probs) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(predict_class(m, x) == 0);
}

TEST_CASE("argmax breaks ties toward the lower index") {
  CHECK(argmax_index({0.2, 0.5, 0.5}) == 1);
  CHECK(argmax_index({0.7, 0.1}) == 0);
  CHECK(argmax_index({-1.0}) == 0);
}

TEST_CASE("tempered softmax flattens with temperature") {
  Logits z{{2.0, 0.0, -1.0}};
  SoftLabel p1 = tempered_softmax(z, 1.0);
  SoftLabel p4 = tempered_softmax(z, 4.0);
  double s1 = 0.0, s4 = 0.0;
  for (double v : p1.probs) s1 += v;
  for (double v : p4.probs) s4 += v;
  CHECK(s1 == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(s4 == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(p4.probs[0] < p1.probs[0]);
  CHECK(p4.probs[2] > p1.probs[2]);
  double want = std::exp(2.0) / (std::exp(2.0) + 1.0 + std::exp(-1.0));
  CHECK(p1.probs[0] == doctest::Approx(want).epsilon(1e-14));
  CHECK_THROWS_AS(tempered_softmax(z, 0.0), std::invalid_argument);
}

TEST_CASE("input gradients match central differences") {
  Rng rng(34);
  std::vector<ClassifierSpec> models;
  models.push_back(make_classifier(Arch::SoftmaxRegression, 8, 8, 2, 3, {}, rng));
  models.push_back(make_classifier(Arch::Mlp, 8, 8, 2, 3, {6, 5}, rng));
  models.push_back(make_classifier(Arch::TinyCnn, 8, 8, 2, 3, {4, 6}, rng));
  // Softmax regression needs nonzero weights for a nonzero gradient.
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (double& v : models[0].params[0].values) v = u(rng);

  std::vector<double> c = {0.7, -1.3, 0.4};
  for (const ClassifierSpec& m : models) {
    Tensor3 x = random_image(8, 8, 2, rng);
    Tensor3 g = backward_to_input(m, x, c);
    REQUIRE(g.same_shape(x));
    const double h = 1e-5;
    for (int probe = 0; probe < 12; ++probe) {
      std::size_t i = rng() % x.data.size();
      Tensor3 up = x, dn = x;
      up.data[i] += h;
      dn.data[i] -= h;
      double want = (scalar_loss(m, up, c) - scalar_loss(m, dn, c)) / (2.0 * h);
      CHECK(g.data[i] == doctest::Approx(want).epsilon(1e-6));
    }
  }
}

TEST_CASE("parameter gradients match central differences") {
  Rng rng(35);
  std::vector<ClassifierSpec> models;
  models.push_back(make_classifier(Arch::SoftmaxRegression, 8, 8, 1, 3, {}, rng));
  models.push_back(make_classifier(Arch::Mlp, 8, 8, 1, 3, {7}, rng));
  models.push_back(make_classifier(Arch::TinyCnn, 8, 8, 1, 3, {3, 5}, rng));
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (double& v : models[0].params[0].values) v = u(rng);

  for (ClassifierSpec& m : models) {
    Tensor3 x = random_image(8, 8, 1, rng);
    const int label = 1;
    ForwardCache cache;
    Logits z = forward_cached(m, x, cache);
    SoftLabel p = tempered_softmax(z, 1.0);
    std::vector<double> dz = p.probs;
    dz[label] -= 1.0;
    ParamGrads grads = zero_grads(m);
    backward_params(m, x, cache, dz, grads);

    const double h = 1e-5;
    for (std::size_t block = 0; block < m.params.size(); ++block) {
      for (int probe = 0; probe < 4; ++probe) {
        std::size_t i = rng() % m.params[block].values.size();
        double saved = m.params[block].values[i];
        auto nll = [&](double v) {
          m.params[block].values[i] = v;
          Logits zz = forward(m, x);
          double mx = zz.values[0];
          for (double t : zz.values) mx = std::max(mx, t);
          double lse = 0.0;
          for (double t : zz.values) lse += std::exp(t - mx);
          return mx + std::log(lse) - zz.values[label];
        };
        double want = (nll(saved + h) - nll(saved - h)) / (2.0 * h);
        m.params[block].values[i] = saved;
        CHECK(grads.blocks[block][i] == doctest::Approx(want).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("momentum step follows the hand recursion") {
  Rng rng(36);
  ClassifierSpec m = make_classifier(Arch::SoftmaxRegression, 1, 1, 1, 2, {}, rng);
  m.params[0].values = {1.0, 2.0};
  m.params[1].values = {0.5, -0.5};
  ParamGrads g = zero_grads(m);
  g.blocks[0] = {1.0, -2.0};
  g.blocks[1] = {0.0, 4.0};
  std::vector<std::vector<double>> vel;
  // v = 0.9*v + 0.5*g + 0.01*w; w -= 0.1*v, applied twice.
  double w = 1.0, v = 0.0;
  apply_sgd_step(m, g, 0.1, 0.9, 0.01, 0.5, vel);
  v = 0.5 * 1.0 + 0.01 * w;
  w -= 0.1 * v;
  CHECK(m.params[0].values[0] == doctest::Approx(w).epsilon(1e-15));
  apply_sgd_step(m, g, 0.1, 0.9, 0.01, 0.5, vel);
  v = 0.9 * v + 0.5 * 1.0 + 0.01 * w;
  w -= 0.1 * v;
  CHECK(m.params[0].values[0] == doctest::Approx(w).epsilon(1e-15));
}

TEST_CASE("zero learning rate leaves parameters untouched") {
  Rng rng(37);
  LabeledDataset d = separable_data(32, rng);
  ClassifierSpec m = make_classifier(Arch::Mlp, 4, 4, 1, 2, {5}, rng);
  ClassifierSpec before = m;
  TrainSchedule s;
  s.lr = 0.0;
  s.epochs = 2;
  Rng train_rng(1);
  ClassifierSpec after = train_classifier(std::move(m), d, s, train_rng);
  for (std::size_t b = 0; b < before.params.size(); ++b)
    CHECK(after.params[b].values == before.params[b].values);
}

TEST_CASE("training separates a separable toy") {
  Rng rng(38);
  LabeledDataset d = separable_data(64, rng);
  ClassifierSpec m = make_classifier(Arch::SoftmaxRegression, 4, 4, 1, 2, {}, rng);
  TrainSchedule s;
  s.lr = 0.5;
  s.epochs = 30;
  s.batch = 16;
  Rng train_rng(2);
  TrainTrace trace;
  m = train_classifier(std::move(m), d, s, train_rng, &trace);
  REQUIRE(trace.epochs.size() == 30);
  CHECK(trace.epochs.back().accuracy >= 0.99);
  CHECK(trace.epochs.back().loss < trace.epochs.front().loss);
  int correct = 0;
  for (std::size_t i = 0; i < d.images.size(); ++i)
    correct += predict_class(m, d.images[i]) == d.labels[i] ? 1 : 0;
  CHECK(correct >= 63);
}

TEST_CASE("training is deterministic and worker-independent") {
  Rng rng(39);
  LabeledDataset d = separable_data(48, rng);
  auto run = [&](int workers) {
    Rng init(7);
    ClassifierSpec m = make_classifier(Arch::Mlp, 4, 4, 1, 2, {6}, init);
    TrainSchedule s;
    s.epochs = 3;
    s.batch = 8;
    s.workers = workers;
    Rng train_rng(3);
    return train_classifier(std::move(m), d, s, train_rng);
  };
  ClassifierSpec a = run(1);
  ClassifierSpec b = run(4);
  ClassifierSpec c = run(0);
  for (std::size_t blk = 0; blk < a.params.size(); ++blk) {
    CHECK(a.params[blk].values == b.params[blk].values);
    CHECK(a.params[blk].values == c.params[blk].values);
  }
}

TEST_CASE("milestones decay the learning rate") {
  Rng rng(40);
  LabeledDataset d = separable_data(32, rng);
  auto run = [&](std::vector<int> ms) {
    Rng init(9);
    ClassifierSpec m = make_classifier(Arch::SoftmaxRegression, 4, 4, 1, 2, {}, init);
    TrainSchedule s;
    s.lr = 0.5;
    s.epochs = 4;
    s.milestones = std::move(ms);
    s.lr_decay = 0.0;  // freezes the model from the milestone onward
    Rng train_rng(4);
    return train_classifier(std::move(m), d, s, train_rng);
  };
  ClassifierSpec frozen2 = run({2});
  ClassifierSpec frozen2b = run({2, 3});
  // With decay 0 the epochs after the first milestone change nothing, so a
  // second milestone is irrelevant.
  for (std::size_t blk = 0; blk < frozen2.params.size(); ++blk)
    CHECK(frozen2.params[blk].values == frozen2b.params[blk].values);
}
