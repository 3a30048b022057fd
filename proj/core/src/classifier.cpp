#include "supermix/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "supermix/parallel.hpp"

namespace supermix {

std::string to_string(Arch a) {
  switch (a) {
    case Arch::SoftmaxRegression: return "softmax-regression";
    case Arch::Mlp: return "mlp";
    case Arch::TinyCnn: return "tiny-cnn";
  }
  return "unknown";
}

Arch arch_from_string(const std::string& s) {
  if (s == "softmax-regression") return Arch::SoftmaxRegression;
  if (s == "mlp") return Arch::Mlp;
  if (s == "tiny-cnn") return Arch::TinyCnn;
  throw std::invalid_argument("unknown architecture: " + s);
}

namespace {

std::size_t shape_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::vector<std::pair<std::string, std::vector<int>>> expected_blocks(
    Arch arch, int w, int h, int c, int m, const std::vector<int>& hidden) {
  std::vector<std::pair<std::string, std::vector<int>>> blocks;
  const int flat = w * h * c;
  switch (arch) {
    case Arch::SoftmaxRegression:
      blocks.push_back({"weight", {m, flat}});
      blocks.push_back({"bias", {m}});
      break;
    case Arch::Mlp: {
      if (hidden.empty()) throw std::invalid_argument("mlp needs at least one hidden size");
      int in = flat;
      for (std::size_t i = 0; i < hidden.size(); ++i) {
        if (hidden[i] < 1) throw std::invalid_argument("mlp hidden size must be positive");
        blocks.push_back({"w" + std::to_string(i), {hidden[i], in}});
        blocks.push_back({"b" + std::to_string(i), {hidden[i]}});
        in = hidden[i];
      }
      blocks.push_back({"w" + std::to_string(hidden.size()), {m, in}});
      blocks.push_back({"b" + std::to_string(hidden.size()), {m}});
      break;
    }
    case Arch::TinyCnn: {
      if (hidden.size() != 2) throw std::invalid_argument("tiny-cnn needs two filter counts");
      if (hidden[0] < 1 || hidden[1] < 1)
        throw std::invalid_argument("tiny-cnn filter counts must be positive");
      if (w % 4 != 0 || h % 4 != 0)
        throw std::invalid_argument("tiny-cnn needs width and height divisible by 4");
      blocks.push_back({"conv1.w", {hidden[0], c, 3, 3}});
      blocks.push_back({"conv1.b", {hidden[0]}});
      blocks.push_back({"conv2.w", {hidden[1], hidden[0], 3, 3}});
      blocks.push_back({"conv2.b", {hidden[1]}});
      blocks.push_back({"fc.w", {m, hidden[1] * (w / 4) * (h / 4)}});
      blocks.push_back({"fc.b", {m}});
      break;
    }
  }
  return blocks;
}

// ---- building blocks ------------------------------------------------------

void dense_forward(const ParamBlock& w, const ParamBlock& b, const std::vector<double>& in,
                   std::vector<double>& out) {
  const int rows = w.shape[0], cols = w.shape[1];
  out.assign(rows, 0.0);
  for (int r = 0; r < rows; ++r) {
    double acc = b.values[r];
    const double* wr = w.values.data() + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) acc += wr[c] * in[c];
    out[r] = acc;
  }
}

void dense_backward_input(const ParamBlock& w, const std::vector<double>& dOut,
                          std::vector<double>& dIn) {
  const int rows = w.shape[0], cols = w.shape[1];
  dIn.assign(cols, 0.0);
  for (int r = 0; r < rows; ++r) {
    const double g = dOut[r];
    if (g == 0.0) continue;
    const double* wr = w.values.data() + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) dIn[c] += g * wr[c];
  }
}

void dense_backward_params(const std::vector<double>& in, const std::vector<double>& dOut,
                           std::vector<double>& dW, std::vector<double>& dB, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    const double g = dOut[r];
    dB[r] += g;
    if (g == 0.0) continue;
    double* dwr = dW.data() + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) dwr[c] += g * in[c];
  }
}

// 3x3 convolution, stride 1, zero padding 1 (same size).
Tensor3 conv3x3(const Tensor3& in, const ParamBlock& w, const ParamBlock& b) {
  const int W = in.width, H = in.height, IC = in.channels, OC = w.shape[0];
  Tensor3 out(W, H, OC);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int o = 0; o < OC; ++o) {
        double acc = b.values[o];
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= W) continue;
            const double* wp = w.values.data() + ((static_cast<std::size_t>(o) * IC) * 9);
            for (int i = 0; i < IC; ++i)
              acc += wp[i * 9 + ky * 3 + kx] * in.at(sx, sy, i);
          }
        }
        out.at(x, y, o) = acc;
      }
    }
  }
  return out;
}

// Gradients of conv3x3: dIn (optional), dW/dB (optional, accumulated).
void conv3x3_backward(const Tensor3& in, const ParamBlock& w, const Tensor3& dOut, Tensor3* dIn,
                      std::vector<double>* dW, std::vector<double>* dB) {
  const int W = in.width, H = in.height, IC = in.channels, OC = w.shape[0];
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int o = 0; o < OC; ++o) {
        const double g = dOut.at(x, y, o);
        if (dB) (*dB)[o] += g;
        if (g == 0.0) continue;
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= W) continue;
            const std::size_t base = (static_cast<std::size_t>(o) * IC) * 9;
            for (int i = 0; i < IC; ++i) {
              const std::size_t wi = base + i * 9 + ky * 3 + kx;
              if (dIn) dIn->at(sx, sy, i) += g * w.values[wi];
              if (dW) (*dW)[wi] += g * in.at(sx, sy, i);
            }
          }
        }
      }
    }
  }
}

Tensor3 avgpool2(const Tensor3& in) {
  Tensor3 out(in.width / 2, in.height / 2, in.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < in.channels; ++c)
        out.at(x, y, c) = 0.25 * (in.at(2 * x, 2 * y, c) + in.at(2 * x + 1, 2 * y, c) +
                                  in.at(2 * x, 2 * y + 1, c) + in.at(2 * x + 1, 2 * y + 1, c));
  return out;
}

Tensor3 avgpool2_backward(const Tensor3& dOut, int in_w, int in_h) {
  Tensor3 dIn(in_w, in_h, dOut.channels);
  for (int y = 0; y < dOut.height; ++y)
    for (int x = 0; x < dOut.width; ++x)
      for (int c = 0; c < dOut.channels; ++c) {
        const double g = 0.25 * dOut.at(x, y, c);
        dIn.at(2 * x, 2 * y, c) = g;
        dIn.at(2 * x + 1, 2 * y, c) = g;
        dIn.at(2 * x, 2 * y + 1, c) = g;
        dIn.at(2 * x + 1, 2 * y + 1, c) = g;
      }
  return dIn;
}

void tanh_inplace(Tensor3& t) {
  for (double& v : t.data) v = std::tanh(v);
}

// dPre = dPost * (1 - a^2), where a is the post-activation value.
void tanh_backward_inplace(Tensor3& grad, const Tensor3& act) {
  for (std::size_t i = 0; i < grad.data.size(); ++i)
    grad.data[i] *= 1.0 - act.data[i] * act.data[i];
}

void check_input(const ClassifierSpec& model, const Tensor3& x) {
  if (x.width != model.width || x.height != model.height || x.channels != model.channels)
    throw std::invalid_argument("forward: input dims do not match the model");
}

}  // namespace

ClassifierSpec make_classifier(Arch arch, int width, int height, int channels, int classes,
                               const std::vector<int>& hidden, Rng& rng) {
  if (width < 1 || height < 1 || channels < 1)
    throw std::invalid_argument("make_classifier: degenerate input dims");
  if (classes < 2) throw std::invalid_argument("make_classifier: need at least 2 classes");

  ClassifierSpec model;
  model.arch = arch;
  model.width = width;
  model.height = height;
  model.channels = channels;
  model.classes = classes;
  model.hidden = hidden;

  for (const auto& [name, shape] : expected_blocks(arch, width, height, channels, classes, hidden)) {
    ParamBlock block;
    block.name = name;
    block.shape = shape;
    block.values.assign(shape_count(shape), 0.0);
    if (arch != Arch::SoftmaxRegression && shape.size() > 1) {
      // Glorot-uniform weights; biases stay zero.
      double fan_in = static_cast<double>(shape_count(shape)) / shape[0];
      double fan_out = shape[0];
      double limit = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (double& v : block.values) v = u(rng);
    }
    model.params.push_back(std::move(block));
  }
  return model;
}

void validate_classifier(const ClassifierSpec& model) {
  if (model.width < 1 || model.height < 1 || model.channels < 1 || model.classes < 2)
    throw std::invalid_argument("classifier: degenerate dims");
  auto expected = expected_blocks(model.arch, model.width, model.height, model.channels,
                                  model.classes, model.hidden);
  if (expected.size() != model.params.size())
    throw std::invalid_argument("classifier: parameter block count mismatch");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& [name, shape] = expected[i];
    const ParamBlock& got = model.params[i];
    if (got.name != name || got.shape != shape || got.values.size() != shape_count(shape))
      throw std::invalid_argument("classifier: parameter block '" + name + "' has wrong shape");
  }
}

Logits forward_cached(const ClassifierSpec& model, const Tensor3& x, ForwardCache& cache) {
  check_input(model, x);
  cache.dense.clear();
  cache.maps.clear();
  Logits z;
  switch (model.arch) {
    case Arch::SoftmaxRegression:
      dense_forward(model.params[0], model.params[1], x.data, z.values);
      break;
    case Arch::Mlp: {
      const std::vector<double>* in = &x.data;
      for (std::size_t layer = 0; layer < model.hidden.size(); ++layer) {
        std::vector<double> h;
        dense_forward(model.params[2 * layer], model.params[2 * layer + 1], *in, h);
        for (double& v : h) v = std::tanh(v);
        cache.dense.push_back(std::move(h));
        in = &cache.dense.back();
      }
      dense_forward(model.params[2 * model.hidden.size()],
                    model.params[2 * model.hidden.size() + 1], *in, z.values);
      break;
    }
    case Arch::TinyCnn: {
      Tensor3 a1 = conv3x3(x, model.params[0], model.params[1]);
      tanh_inplace(a1);
      Tensor3 p1 = avgpool2(a1);
      Tensor3 a2 = conv3x3(p1, model.params[2], model.params[3]);
      tanh_inplace(a2);
      Tensor3 p2 = avgpool2(a2);
      dense_forward(model.params[4], model.params[5], p2.data, z.values);
      cache.maps.push_back(std::move(a1));
      cache.maps.push_back(std::move(p1));
      cache.maps.push_back(std::move(a2));
      cache.maps.push_back(std::move(p2));
      break;
    }
  }
  return z;
}

Logits forward(const ClassifierSpec& model, const Tensor3& x) {
  ForwardCache cache;
  return forward_cached(model, x, cache);
}

SoftLabel tempered_softmax(const Logits& z, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("tempered_softmax: tau must be positive");
  if (z.values.empty()) throw std::invalid_argument("tempered_softmax: empty logits");
  SoftLabel out;
  out.probs.resize(z.values.size());
  double zmax = *std::max_element(z.values.begin(), z.values.end());
  double sum = 0.0;
  for (std::size_t j = 0; j < z.values.size(); ++j) {
    out.probs[j] = std::exp((z.values[j] - zmax) / tau);
    sum += out.probs[j];
  }
  for (double& p : out.probs) p /= sum;
  return out;
}

int argmax_index(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("argmax of empty vector");
  int best = 0;
  for (int j = 1; j < static_cast<int>(values.size()); ++j)
    if (values[j] > values[best]) best = j;
  return best;
}

int predict_class(const ClassifierSpec& model, const Tensor3& x) {
  return argmax_index(forward(model, x).values);
}

Tensor3 backward_to_input(const ClassifierSpec& model, const Tensor3& x,
                          const std::vector<double>& dL_dlogits) {
  check_input(model, x);
  if (static_cast<int>(dL_dlogits.size()) != model.classes)
    throw std::invalid_argument("backward_to_input: upstream gradient has wrong length");

  ForwardCache cache;
  forward_cached(model, x, cache);
  Tensor3 dx(model.width, model.height, model.channels);

  switch (model.arch) {
    case Arch::SoftmaxRegression:
      dense_backward_input(model.params[0], dL_dlogits, dx.data);
      break;
    case Arch::Mlp: {
      std::vector<double> g = dL_dlogits;
      for (int layer = static_cast<int>(model.hidden.size()); layer >= 0; --layer) {
        std::vector<double> gIn;
        dense_backward_input(model.params[2 * layer], g, gIn);
        if (layer > 0) {
          const std::vector<double>& a = cache.dense[layer - 1];
          for (std::size_t i = 0; i < gIn.size(); ++i) gIn[i] *= 1.0 - a[i] * a[i];
        }
        g = std::move(gIn);
      }
      dx.data = std::move(g);
      break;
    }
    case Arch::TinyCnn: {
      const Tensor3& a1 = cache.maps[0];
      const Tensor3& p1 = cache.maps[1];
      const Tensor3& a2 = cache.maps[2];
      const Tensor3& p2 = cache.maps[3];
      std::vector<double> dFlat;
      dense_backward_input(model.params[4], dL_dlogits, dFlat);
      Tensor3 dP2(p2.width, p2.height, p2.channels);
      dP2.data = std::move(dFlat);
      Tensor3 dA2 = avgpool2_backward(dP2, a2.width, a2.height);
      tanh_backward_inplace(dA2, a2);
      Tensor3 dP1(p1.width, p1.height, p1.channels);
      conv3x3_backward(p1, model.params[2], dA2, &dP1, nullptr, nullptr);
      Tensor3 dA1 = avgpool2_backward(dP1, a1.width, a1.height);
      tanh_backward_inplace(dA1, a1);
      conv3x3_backward(x, model.params[0], dA1, &dx, nullptr, nullptr);
      break;
    }
  }
  return dx;
}

ParamGrads zero_grads(const ClassifierSpec& model) {
  ParamGrads g;
  g.blocks.reserve(model.params.size());
  for (const ParamBlock& p : model.params) g.blocks.emplace_back(p.values.size(), 0.0);
  return g;
}

void backward_params(const ClassifierSpec& model, const Tensor3& x, const ForwardCache& cache,
                     const std::vector<double>& dL_dlogits, ParamGrads& grads) {
  if (static_cast<int>(dL_dlogits.size()) != model.classes)
    throw std::invalid_argument("backward_params: upstream gradient has wrong length");
  if (grads.blocks.size() != model.params.size())
    throw std::invalid_argument("backward_params: gradient buffer does not match the model");

  switch (model.arch) {
    case Arch::SoftmaxRegression:
      dense_backward_params(x.data, dL_dlogits, grads.blocks[0], grads.blocks[1], model.classes,
                            model.width * model.height * model.channels);
      break;
    case Arch::Mlp: {
      std::vector<double> g = dL_dlogits;
      for (int layer = static_cast<int>(model.hidden.size()); layer >= 0; --layer) {
        const std::vector<double>& in = layer == 0 ? x.data : cache.dense[layer - 1];
        const ParamBlock& w = model.params[2 * layer];
        dense_backward_params(in, g, grads.blocks[2 * layer], grads.blocks[2 * layer + 1],
                              w.shape[0], w.shape[1]);
        if (layer > 0) {
          std::vector<double> gIn;
          dense_backward_input(w, g, gIn);
          const std::vector<double>& a = cache.dense[layer - 1];
          for (std::size_t i = 0; i < gIn.size(); ++i) gIn[i] *= 1.0 - a[i] * a[i];
          g = std::move(gIn);
        }
      }
      break;
    }
    case Arch::TinyCnn: {
      const Tensor3& a1 = cache.maps[0];
      const Tensor3& p1 = cache.maps[1];
      const Tensor3& a2 = cache.maps[2];
      const Tensor3& p2 = cache.maps[3];
      const ParamBlock& fc = model.params[4];
      dense_backward_params(p2.data, dL_dlogits, grads.blocks[4], grads.blocks[5], fc.shape[0],
                            fc.shape[1]);
      std::vector<double> dFlat;
      dense_backward_input(fc, dL_dlogits, dFlat);
      Tensor3 dP2(p2.width, p2.height, p2.channels);
      dP2.data = std::move(dFlat);
      Tensor3 dA2 = avgpool2_backward(dP2, a2.width, a2.height);
      tanh_backward_inplace(dA2, a2);
      Tensor3 dP1(p1.width, p1.height, p1.channels);
      conv3x3_backward(p1, model.params[2], dA2, &dP1, &grads.blocks[2], &grads.blocks[3]);
      Tensor3 dA1 = avgpool2_backward(dP1, a1.width, a1.height);
      tanh_backward_inplace(dA1, a1);
      conv3x3_backward(x, model.params[0], dA1, nullptr, &grads.blocks[0], &grads.blocks[1]);
      break;
    }
  }
}

void apply_sgd_step(ClassifierSpec& model, const ParamGrads& grads, double lr, double momentum,
                    double weight_decay, double scale,
                    std::vector<std::vector<double>>& velocity) {
  if (velocity.size() != model.params.size()) {
    velocity.clear();
    for (const ParamBlock& p : model.params) velocity.emplace_back(p.values.size(), 0.0);
  }
  for (std::size_t b = 0; b < model.params.size(); ++b) {
    std::vector<double>& w = model.params[b].values;
    const std::vector<double>& g = grads.blocks[b];
    std::vector<double>& v = velocity[b];
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum * v[i] + scale * g[i] + weight_decay * w[i];
      w[i] -= lr * v[i];
    }
  }
}

ClassifierSpec train_classifier(ClassifierSpec model, const LabeledDataset& data,
                                const TrainSchedule& schedule, Rng& rng, TrainTrace* trace) {
  validate_classifier(model);
  if (data.images.empty()) throw std::invalid_argument("train_classifier: empty dataset");
  if (data.images.size() != data.labels.size())
    throw std::invalid_argument("train_classifier: image/label count mismatch");
  for (int y : data.labels)
    if (y < 0 || y >= model.classes)
      throw std::invalid_argument("train_classifier: label out of range");
  if (schedule.batch < 1 || schedule.epochs < 0)
    throw std::invalid_argument("train_classifier: bad schedule");

  const std::size_t n = data.images.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::vector<double>> velocity;

  // Fixed bucket count so the reduction order, and hence the trained
  // parameters, never depend on the worker count.
  constexpr int kBuckets = 8;

  if (trace) trace->epochs.clear();
  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    double lr = schedule.lr;
    for (int ms : schedule.milestones)
      if (ms <= epoch) lr *= schedule.lr_decay;

    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t correct = 0;

    for (std::size_t start = 0; start < n; start += schedule.batch) {
      const std::size_t count = std::min<std::size_t>(schedule.batch, n - start);

      struct Bucket {
        ParamGrads grads;
        double loss = 0.0;
        std::size_t correct = 0;
      };
      std::vector<Bucket> buckets(kBuckets);
      for (Bucket& b : buckets) b.grads = zero_grads(model);

      parallel_for(kBuckets, schedule.workers, [&](std::size_t bi) {
        Bucket& bucket = buckets[bi];
        for (std::size_t j = bi; j < count; j += kBuckets) {
          const std::size_t idx = order[start + j];
          const Tensor3& x = data.images[idx];
          const int y = data.labels[idx];
          ForwardCache cache;
          Logits z = forward_cached(model, x, cache);
          // Stable cross-entropy: loss = logsumexp(z) - z_y.
          double zmax = *std::max_element(z.values.begin(), z.values.end());
          double sum = 0.0;
          for (double v : z.values) sum += std::exp(v - zmax);
          bucket.loss += std::log(sum) + zmax - z.values[y];
          if (argmax_index(z.values) == y) ++bucket.correct;
          std::vector<double> dz(z.values.size());
          for (std::size_t c = 0; c < dz.size(); ++c)
            dz[c] = std::exp(z.values[c] - zmax) / sum - (static_cast<int>(c) == y ? 1.0 : 0.0);
          backward_params(model, x, cache, dz, bucket.grads);
        }
      });

      ParamGrads total = std::move(buckets[0].grads);
      double batch_loss = buckets[0].loss;
      std::size_t batch_correct = buckets[0].correct;
      for (int bi = 1; bi < kBuckets; ++bi) {
        for (std::size_t b = 0; b < total.blocks.size(); ++b)
          for (std::size_t i = 0; i < total.blocks[b].size(); ++i)
            total.blocks[b][i] += buckets[bi].grads.blocks[b][i];
        batch_loss += buckets[bi].loss;
        batch_correct += buckets[bi].correct;
      }

      apply_sgd_step(model, total, lr, schedule.momentum, schedule.weight_decay,
                     1.0 / static_cast<double>(count), velocity);
      epoch_loss += batch_loss;
      correct += batch_correct;
    }

    if (trace)
      trace->epochs.push_back({epoch_loss / static_cast<double>(n),
                               static_cast<double>(correct) / static_cast<double>(n)});
  }
  return model;
}

}  // namespace supermix
