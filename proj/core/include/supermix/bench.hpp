#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "supermix/dataset.hpp"
#include "supermix/optimizer.hpp"

namespace supermix {

struct BenchRow {
  std::string method;
  double mean_iterations = 0.0;
  double mean_elapsed_ms = 0.0;   // optimization loop only
  double convergence_rate = 0.0;
  double speedup_vs_sgd = 0.0;    // 0 when sgd is not among the methods
};

struct BenchReport {
  std::vector<BenchRow> rows;
  int instances = 0;
  int threads = 1;                // instances run sequentially by design
  std::string precision = "float64";
  std::string note;
};

/// Times the three optimizers on identical instance sets. Instances (image
/// subsets, Dirichlet weights, teacher classes) are materialized once from
/// per-index seeds and reused for every method, so iteration counts compare
/// like for like. Instances run on a single worker so timings are
/// scheduler-independent; an untimed warm-up pass precedes measurement.
/// Requires instances >= 64 and a nonempty method list.
BenchReport run_bench(const LabeledDataset& d, const ClassifierSpec& teacher,
                      const SuperMixConfig& base_cfg, const std::vector<OptimMethod>& methods,
                      int instances, uint64_t seed, bool warmup);

/// CSV with full-precision columns; ratios recompute exactly from the rows.
/// config_echo lines are embedded as '#' comments.
std::string bench_csv(const BenchReport& report, const std::string& commented_config);

/// Aligned human-readable table.
std::string bench_table(const BenchReport& report);

std::vector<OptimMethod> parse_method_list(const std::string& csv);

}  // namespace supermix
