#include "supermix/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "io_util.hpp"
#include "supermix/kernels.hpp"

namespace supermix {

std::string to_string(MixMethod m) {
  switch (m) {
    case MixMethod::SuperMix: return "supermix";
    case MixMethod::MixUp: return "mixup";
    case MixMethod::CutMix: return "cutmix";
  }
  return "unknown";
}

MixMethod mix_method_from_string(const std::string& s) {
  if (s == "supermix") return MixMethod::SuperMix;
  if (s == "mixup") return MixMethod::MixUp;
  if (s == "cutmix") return MixMethod::CutMix;
  throw std::invalid_argument("unknown mix method: " + s);
}

void quantize_to_storage(Tensor3& t) {
  for (double& v : t.data) v = static_cast<double>(static_cast<float>(v));
}

// ---------------------------------------------------------------------------
// Synthetic shape dataset
// ---------------------------------------------------------------------------

namespace {

struct ShapeParams {
  double cx, cy, s;
  int variant;  // small per-sample geometry tweak
};

// Fixed per-class color: golden-ratio hue spacing keeps colors well separated
// for any class count; extra channels cycle through the RGB components.
std::vector<double> class_palette(int cls, int channels) {
  // Golden-ratio spacing keeps hues distinct for any class count; the base
  // offset maximizes the distance between pairwise palette blends and every
  // other class palette, so mixtures of two classes do not imitate a third.
  const double hue = std::fmod(0.49 + cls * 0.61803398874989485, 1.0);
  const double sat = 0.65, val = 0.9;
  const double h6 = hue * 6.0;
  const int sector = static_cast<int>(h6) % 6;
  const double f = h6 - std::floor(h6);
  const double p = val * (1.0 - sat);
  const double q = val * (1.0 - sat * f);
  const double t = val * (1.0 - sat * (1.0 - f));
  double rgb[3];
  switch (sector) {
    case 0: rgb[0] = val; rgb[1] = t; rgb[2] = p; break;
    case 1: rgb[0] = q; rgb[1] = val; rgb[2] = p; break;
    case 2: rgb[0] = p; rgb[1] = val; rgb[2] = t; break;
    case 3: rgb[0] = p; rgb[1] = q; rgb[2] = val; break;
    case 4: rgb[0] = t; rgb[1] = p; rgb[2] = val; break;
    default: rgb[0] = val; rgb[1] = p; rgb[2] = q; break;
  }
  std::vector<double> out(channels);
  for (int c = 0; c < channels; ++c) out[c] = rgb[c % 3];
  return out;
}

bool inside_shape(int cls, double x, double y, const ShapeParams& p) {
  const double dx = x - p.cx, dy = y - p.cy, s = p.s;
  const double d2 = dx * dx + dy * dy;
  switch (cls % 10) {
    case 0:  // filled disk
      return d2 <= s * s;
    case 1:  // filled square
      return std::fabs(dx) <= 0.88 * s && std::fabs(dy) <= 0.88 * s;
    case 2: {  // filled triangle (up or down)
      double yy = (p.variant % 2 == 0) ? dy : -dy;
      if (yy < -s || yy > 0.8 * s) return false;
      double half = (yy + s) / 1.8;  // width grows linearly from apex
      return std::fabs(dx) <= half;
    }
    case 3:  // ring
      return d2 <= s * s && d2 >= 0.3 * s * s;
    case 4: {  // plus
      bool horiz = std::fabs(dy) <= 0.33 * s && std::fabs(dx) <= s;
      bool vert = std::fabs(dx) <= 0.33 * s && std::fabs(dy) <= s;
      return horiz || vert;
    }
    case 5: {  // diagonal cross
      if (std::fabs(dx) > s || std::fabs(dy) > s) return false;
      return std::fabs(dx - dy) <= 0.45 * s || std::fabs(dx + dy) <= 0.45 * s;
    }
    case 6: {  // hollow square frame
      double m = std::fmax(std::fabs(dx), std::fabs(dy));
      return m <= 0.9 * s && m >= 0.5 * s;
    }
    case 7: {  // horizontal bars
      if (std::fabs(dx) > 0.9 * s || std::fabs(dy) > 0.9 * s) return false;
      int band = static_cast<int>(std::floor((dy + 0.9 * s) / (0.45 * s)));
      return band % 2 == 0;
    }
    case 8: {  // vertical bars
      if (std::fabs(dx) > 0.9 * s || std::fabs(dy) > 0.9 * s) return false;
      int band = static_cast<int>(std::floor((dx + 0.9 * s) / (0.45 * s)));
      return band % 2 == 0;
    }
    case 9: {  // two small disks
      double lx = dx + 0.55 * s, rx = dx - 0.55 * s;
      return lx * lx + dy * dy <= 0.2 * s * s || rx * rx + dy * dy <= 0.2 * s * s;
    }
  }
  return false;
}

Tensor3 render_sample(int cls, const SynthSpec& spec, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int W = spec.width, H = spec.height, C = spec.channels;

  // Class color with per-sample jitter: color carries the label, but noisily,
  // so geometry still matters and small models do not saturate.
  std::vector<double> shade = class_palette(cls, C);
  for (double& v : shade)
    v = std::clamp(v + (unit(rng) - 0.5) * 2.0 * spec.color_jitter, 0.0, 1.0);

  // Background: base color re-drawn until it roughly contrasts with the class
  // color, plus low-frequency texture and fine per-pixel noise.
  std::vector<double> base(C);
  for (int tries = 0; tries < 32; ++tries) {
    double dist = 0.0;
    for (int c = 0; c < C; ++c) {
      base[c] = 0.25 + 0.5 * unit(rng);
      dist += std::fabs(shade[c] - base[c]);
    }
    if (dist >= 0.2 * C) break;
  }

  Field2 coarse(4, 4);
  for (double& v : coarse.data) v = (unit(rng) - 0.5) * 2.0 * spec.noise;
  Field2 texture = upsample_bilinear(coarse, W, H);

  ShapeParams p;
  double minwh = std::min(W, H);
  p.cx = W / 2.0 + (unit(rng) - 0.5) * 2.0 * spec.position_jitter;
  p.cy = H / 2.0 + (unit(rng) - 0.5) * 2.0 * spec.position_jitter;
  p.s = (0.16 + 0.22 * unit(rng)) * minwh;
  p.variant = static_cast<int>(unit(rng) * 4.0);

  // Distractor: a half-size shape of random geometry and color off to one
  // side, so the label cannot be read off local color statistics alone.
  const int dgeom = static_cast<int>(unit(rng) * 10.0);
  std::vector<double> dshade(C);
  for (double& v : dshade) v = unit(rng);
  ShapeParams dp;
  dp.s = 0.45 * p.s;
  dp.cx = W / 2.0 + (unit(rng) < 0.5 ? -1.0 : 1.0) * (0.28 + 0.12 * unit(rng)) * W;
  dp.cy = H / 2.0 + (unit(rng) < 0.5 ? -1.0 : 1.0) * (0.28 + 0.12 * unit(rng)) * H;
  dp.variant = static_cast<int>(unit(rng) * 4.0);

  Tensor3 img(W, H, C);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      bool in = inside_shape(cls, x + 0.5, y + 0.5, p);
      bool in_d = !in && inside_shape(dgeom, x + 0.5, y + 0.5, dp);
      for (int c = 0; c < C; ++c) {
        double v = in ? shade[c] : in_d ? dshade[c] : base[c] + texture.at(x, y);
        v += (unit(rng) - 0.5) * spec.noise * 1.5;
        img.at(x, y, c) = std::fmin(std::fmax(v, 0.0), 1.0);
      }
    }
  }
  quantize_to_storage(img);
  return img;
}

LabeledDataset synth_split(const SynthSpec& spec, int count, Split split, Rng& rng) {
  LabeledDataset d;
  d.classes = spec.classes;
  d.split = split;
  d.images.reserve(count);
  d.labels.reserve(count);
  for (int i = 0; i < count; ++i) {
    int cls = i % spec.classes;  // balanced
    d.images.push_back(render_sample(cls, spec, rng));
    d.labels.push_back(cls);
  }
  return d;
}

}  // namespace

SynthResult synth_dataset(const SynthSpec& spec, Rng& rng) {
  if (spec.classes < 2) throw std::invalid_argument("synth_dataset: need at least 2 classes");
  if (spec.width < 8 || spec.height < 8 || spec.channels < 1)
    throw std::invalid_argument("synth_dataset: degenerate image dims");
  SynthResult r;
  r.train = synth_split(spec, spec.train_count, Split::Train, rng);
  r.test = synth_split(spec, spec.test_count, Split::Test, rng);
  return r;
}

// ---------------------------------------------------------------------------
// Binary container (.smxd) — layout in docs/FORMATS.md
// ---------------------------------------------------------------------------

namespace {

constexpr uint32_t kDatasetVersion = 1;
constexpr uint32_t kFlagMixed = 1u << 0;
constexpr uint32_t kFlagSoftLabels = 1u << 1;
constexpr uint32_t kFlagStats = 1u << 2;

using io::put_f32;
using io::put_f64;
using io::put_u32;
using io::put_u64;

void append_header(std::string& out, uint32_t flags, uint32_t provenance, double kappa,
                   double tau, uint32_t split, int classes, int w, int h, int c,
                   uint64_t count, const std::string& config) {
  out += "SMXD";
  put_u32(out, kDatasetVersion);
  put_u32(out, static_cast<uint32_t>(classes));
  put_u32(out, static_cast<uint32_t>(w));
  put_u32(out, static_cast<uint32_t>(h));
  put_u32(out, static_cast<uint32_t>(c));
  put_u64(out, count);
  put_u32(out, flags);
  put_u32(out, provenance);
  put_f64(out, kappa);
  put_f64(out, tau);
  put_u32(out, split);
  put_u32(out, static_cast<uint32_t>(config.size()));
  out += config;
}

void append_images(std::string& out, const std::vector<Tensor3>& images) {
  for (const Tensor3& t : images)
    for (double v : t.data) put_f32(out, static_cast<float>(v));
}

}  // namespace

void save_dataset(const std::string& path, const LabeledDataset& d,
                  const std::string& config_echo) {
  if (d.images.size() != d.labels.size())
    throw std::invalid_argument("save_dataset: image/label count mismatch");
  for (int label : d.labels)
    if (label < 0 || label >= d.classes)
      throw std::invalid_argument("save_dataset: label outside [0, classes)");
  int w = d.images.empty() ? 0 : d.images[0].width;
  int h = d.images.empty() ? 0 : d.images[0].height;
  int c = d.images.empty() ? 0 : d.images[0].channels;
  std::string out;
  append_header(out, 0, 0, 0.0, 1.0, d.split == Split::Test ? 1 : 0, d.classes, w, h, c,
                d.images.size(), config_echo);
  append_images(out, d.images);
  for (int label : d.labels) put_u32(out, static_cast<uint32_t>(label));
  io::write_file_atomic(path, out);
}

void save_dataset(const std::string& path, const MixedDataset& d,
                  const std::string& config_echo) {
  if (d.images.size() != d.pseudo_classes.size())
    throw std::invalid_argument("save_dataset: image/pseudo-class count mismatch");
  for (int label : d.pseudo_classes)
    if (label < 0 || label >= d.classes)
      throw std::invalid_argument("save_dataset: pseudo class outside [0, classes)");
  uint32_t flags = kFlagMixed;
  if (!d.soft_labels.empty()) flags |= kFlagSoftLabels;
  if (!d.iterations.empty()) flags |= kFlagStats;
  int w = d.images.empty() ? 0 : d.images[0].width;
  int h = d.images.empty() ? 0 : d.images[0].height;
  int c = d.images.empty() ? 0 : d.images[0].channels;
  std::string out;
  append_header(out, flags, static_cast<uint32_t>(d.provenance) + 1, d.kappa,
                d.soft_label_tau, 0, d.classes, w, h, c, d.images.size(), config_echo);
  append_images(out, d.images);
  for (int label : d.pseudo_classes) put_u32(out, static_cast<uint32_t>(label));
  if (flags & kFlagSoftLabels) {
    for (const auto& sl : d.soft_labels) {
      if (static_cast<int>(sl.size()) != d.classes)
        throw std::invalid_argument("save_dataset: soft label length mismatch");
      for (double v : sl) put_f64(out, v);
    }
  }
  if (flags & kFlagStats) {
    if (d.iterations.size() != d.images.size() || d.converged.size() != d.images.size())
      throw std::invalid_argument("save_dataset: stats length mismatch");
    for (std::size_t i = 0; i < d.images.size(); ++i) {
      put_u32(out, static_cast<uint32_t>(d.iterations[i]));
      out.push_back(static_cast<char>(d.converged[i]));
    }
  }
  io::write_file_atomic(path, out);
}

StoredDataset load_dataset(const std::string& path) {
  std::string buf = io::read_file(path);
  io::Cursor cur(buf, path);
  if (cur.bytes(4) != "SMXD") throw std::runtime_error("not a dataset file (bad magic): " + path);
  uint32_t version = cur.u32();
  if (version != kDatasetVersion)
    throw std::runtime_error("unsupported dataset version in " + path);

  StoredDataset out;
  out.classes = static_cast<int>(cur.u32());
  out.width = static_cast<int>(cur.u32());
  out.height = static_cast<int>(cur.u32());
  out.channels = static_cast<int>(cur.u32());
  uint64_t count = cur.u64();
  uint32_t flags = cur.u32();
  uint32_t provenance = cur.u32();
  double kappa = cur.f64();
  double tau = cur.f64();
  uint32_t split = cur.u32();
  uint32_t config_len = cur.u32();
  out.config_echo = cur.bytes(config_len);

  if (out.classes < 1 || out.width < 1 || out.height < 1 || out.channels < 1)
    throw std::runtime_error("corrupt dataset header (bad dims): " + path);
  if (count > (1ull << 32))
    throw std::runtime_error("corrupt dataset header (implausible count): " + path);

  auto read_images = [&](std::vector<Tensor3>& images) {
    images.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
      Tensor3 t(out.width, out.height, out.channels);
      for (double& v : t.data) v = static_cast<double>(cur.f32());
      images.push_back(std::move(t));
    }
  };
  auto read_labels = [&](std::vector<int>& labels) {
    labels.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
      uint32_t l = cur.u32();
      if (l >= static_cast<uint32_t>(out.classes))
        throw std::runtime_error("corrupt dataset (label out of range): " + path);
      labels.push_back(static_cast<int>(l));
    }
  };

  out.mixed = (flags & kFlagMixed) != 0;
  if (!out.mixed) {
    out.labeled.classes = out.classes;
    out.labeled.split = split == 1 ? Split::Test : Split::Train;
    read_images(out.labeled.images);
    read_labels(out.labeled.labels);
  } else {
    out.mix.classes = out.classes;
    out.mix.kappa = kappa;
    out.mix.soft_label_tau = tau;
    if (provenance < 1 || provenance > 3)
      throw std::runtime_error("corrupt dataset (bad provenance): " + path);
    out.mix.provenance = static_cast<MixMethod>(provenance - 1);
    read_images(out.mix.images);
    read_labels(out.mix.pseudo_classes);
    if (flags & kFlagSoftLabels) {
      out.mix.soft_labels.reserve(count);
      for (uint64_t i = 0; i < count; ++i) {
        std::vector<double> sl(out.classes);
        for (double& v : sl) v = cur.f64();
        out.mix.soft_labels.push_back(std::move(sl));
      }
    }
    if (flags & kFlagStats) {
      out.mix.iterations.reserve(count);
      out.mix.converged.reserve(count);
      for (uint64_t i = 0; i < count; ++i) {
        out.mix.iterations.push_back(static_cast<int>(cur.u32()));
        out.mix.converged.push_back(cur.u8());
      }
    }
  }
  if (!cur.at_end()) throw std::runtime_error("trailing bytes in dataset file: " + path);
  return out;
}

LabeledDataset load_labeled_dataset(const std::string& path) {
  StoredDataset s = load_dataset(path);
  if (s.mixed) throw std::runtime_error("expected a labeled dataset, got a mixed one: " + path);
  return std::move(s.labeled);
}

MixedDataset load_mixed_dataset(const std::string& path) {
  StoredDataset s = load_dataset(path);
  if (!s.mixed) throw std::runtime_error("expected a mixed dataset, got a labeled one: " + path);
  return std::move(s.mix);
}

}  // namespace supermix
