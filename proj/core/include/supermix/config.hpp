#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "supermix/classifier.hpp"
#include "supermix/dataset.hpp"
#include "supermix/optimizer.hpp"

namespace supermix {

/// Every tunable of the toolchain, addressable by flat dotted keys
/// ("optimizer.max_iters"). One schema drives file parsing, CLI override
/// flags, and the config echo embedded in output artifacts.
struct RunConfig {
  uint64_t seed = 1;
  int workers = 0;          // 0 -> hardware default
  std::string out = "out";  // output directory

  SynthSpec dataset;
  std::string dataset_path;  // load this .smxd instead of synthesizing

  std::string teacher_arch = "tiny-cnn";
  std::vector<int> teacher_hidden = {16, 24};
  std::string teacher_path;  // checkpoint to load instead of training
  std::string student_arch = "mlp";
  std::vector<int> student_hidden = {64};

  TrainSchedule train{0.02, 0.9, 5e-4, 30, 32, {24}, 0.1, 0};

  SuperMixConfig optimizer;  // includes the objective weights

  std::string mix_method = "supermix";
  double kappa = 5.0;
  double teacher_floor = 0.5;
  bool drop_unconverged = false;
  bool store_soft_labels = true;
  double soft_label_tau = 4.0;
  int panels = 0;            // PNG panels to export from cmd_mix
  std::string dprime_path;   // mixed dataset input for cmd_distill

  std::string distill_objective = "ce";
  double tau = 4.0;
  double lambda_kd = 0.1;
  int distill_seeds = 1;     // >1 emits a mean +/- std summary

  int bench_instances = 256;
  std::string bench_methods = "newton-sp,newton,sgd";
  bool bench_warmup = true;

  int analyze_top_n = 5;
  int analyze_images = 1000;
};

/// All schema keys in canonical order.
std::vector<std::string> config_keys();

/// Sets one field from its text form. Unknown keys and malformed values
/// throw invalid_argument.
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);

/// Reads "key = value" lines ('#' comments, blank lines allowed).
RunConfig parse_config_file(const std::string& path);

/// Canonical "key=value" listing of the effective config, one per line;
/// embedded into every output artifact.
std::string config_echo(const RunConfig& cfg);

/// The same listing with each line prefixed by "# ", for CSV headers.
std::string config_echo_commented(const RunConfig& cfg);

}  // namespace supermix
