#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "supermix/tensor.hpp"

namespace supermix {

enum class Split { Train, Test };

struct LabeledDataset {
  std::vector<Tensor3> images;
  std::vector<int> labels;  // in [0, classes)
  int classes = 0;
  Split split = Split::Train;

  std::size_t size() const { return images.size(); }
};

enum class MixMethod { SuperMix, MixUp, CutMix };

std::string to_string(MixMethod m);
MixMethod mix_method_from_string(const std::string& s);

/// Teacher-labeled mixed dataset D'. pseudo_classes hold the teacher argmax
/// on the stored images; soft_labels (optional) hold the teacher's tempered
/// probabilities on the stored images at soft_label_tau.
struct MixedDataset {
  std::vector<Tensor3> images;
  std::vector<int> pseudo_classes;
  std::vector<std::vector<double>> soft_labels;  // empty when not stored
  std::vector<int> iterations;                   // optimizer iterations per sample
  std::vector<uint8_t> converged;                // 1 when the stop criterion held
  MixMethod provenance = MixMethod::SuperMix;
  double kappa = 0.0;
  double soft_label_tau = 1.0;
  int classes = 0;

  std::size_t size() const { return images.size(); }
};

/// Recipe for the synthetic shape dataset: per-class colored geometric
/// shapes over textured noise backgrounds. Deterministic given the seed.
struct SynthSpec {
  int classes = 4;
  int width = 32;
  int height = 32;
  int channels = 3;
  int train_count = 2000;
  int test_count = 500;
  double noise = 0.25;        // background texture amplitude
  double position_jitter = 6; // shape center jitter in pixels
  double color_jitter = 0.26; // per-channel shape color jitter amplitude
};

struct SynthResult {
  LabeledDataset train;
  LabeledDataset test;
};

SynthResult synth_dataset(const SynthSpec& spec, Rng& rng);

/// Snap every element to the nearest 32-bit float so a save/load cycle
/// through the dataset file reproduces the in-memory values exactly.
void quantize_to_storage(Tensor3& t);

// ---- dataset container format (.smxd) ----------------------------------
// See docs/FORMATS.md. Little-endian, float32 image payload.

void save_dataset(const std::string& path, const LabeledDataset& d,
                  const std::string& config_echo);
void save_dataset(const std::string& path, const MixedDataset& d,
                  const std::string& config_echo);

struct StoredDataset {
  bool mixed = false;
  LabeledDataset labeled;  // when !mixed
  MixedDataset mix;        // when mixed
  int width = 0, height = 0, channels = 0, classes = 0;
  std::string config_echo;
};

StoredDataset load_dataset(const std::string& path);
LabeledDataset load_labeled_dataset(const std::string& path);
MixedDataset load_mixed_dataset(const std::string& path);

}  // namespace supermix
