#include "supermix/bench.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "supermix/pipeline.hpp"

namespace supermix {

std::vector<OptimMethod> parse_method_list(const std::string& csv) {
  std::vector<OptimMethod> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t a = item.find_first_not_of(" \t");
    std::size_t b = item.find_last_not_of(" \t");
    if (a == std::string::npos) continue;
    out.push_back(optim_method_from_string(item.substr(a, b - a + 1)));
  }
  return out;
}

namespace {

std::string f17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

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

}  // namespace

BenchReport run_bench(const LabeledDataset& d, const ClassifierSpec& teacher,
                      const SuperMixConfig& base_cfg, const std::vector<OptimMethod>& methods,
                      int instances, uint64_t seed, bool warmup) {
  if (methods.empty()) throw std::invalid_argument("run_bench: empty method list");
  if (instances < 64) throw std::invalid_argument("run_bench: need at least 64 instances");
  validate_supermix_config(base_cfg);
  if (d.images.size() < static_cast<std::size_t>(base_cfg.k))
    throw std::invalid_argument("run_bench: dataset smaller than k");

  // One instance set for every method: inputs, weights, and classes pinned.
  std::vector<MixInput> inputs(instances);
  for (int i = 0; i < instances; ++i) {
    Rng rng = per_index_rng(seed, static_cast<uint64_t>(i));
    std::vector<std::size_t> idx = draw_distinct(d.images.size(), base_cfg.k, rng);
    MixInput& in = inputs[i];
    for (std::size_t j : idx) {
      in.images.push_back(d.images[j]);
      in.teacher_classes.push_back(predict_class(teacher, d.images[j]));
    }
    in.weights = sample_dirichlet(base_cfg.alpha, base_cfg.k, rng);
  }

  BenchReport report;
  report.instances = instances;
  report.threads = 1;
  {
    std::ostringstream note;
    note << "loop-only timing, sequential instances, lambda_s="
         << base_cfg.objective.lambda_s << ", lambda_sigma=" << base_cfg.objective.lambda_sigma
         << ", grid=" << base_cfg.grid_w << "x" << base_cfg.grid_h
         << ", sigma=" << base_cfg.sigma << ", max_iters=" << base_cfg.max_iters;
    report.note = note.str();
  }

  Rng unused(0);  // supermix draws nothing: weights and classes are pinned
  for (OptimMethod method : methods) {
    SuperMixConfig cfg = base_cfg;
    cfg.method = method;

    if (warmup) {
      const int warm = std::min(instances, 8);
      for (int i = 0; i < warm; ++i) supermix(inputs[i], teacher, cfg, unused);
    }

    double iter_sum = 0.0, time_sum = 0.0;
    int converged = 0;
    for (int i = 0; i < instances; ++i) {
      MixResult res = supermix(inputs[i], teacher, cfg, unused);
      iter_sum += res.iterations;
      time_sum += res.elapsed;
      if (res.converged) ++converged;
    }

    BenchRow row;
    row.method = to_string(method);
    row.mean_iterations = iter_sum / instances;
    row.mean_elapsed_ms = time_sum / instances * 1e3;
    row.convergence_rate = static_cast<double>(converged) / instances;
    report.rows.push_back(row);
  }

  for (const BenchRow& row : report.rows) {
    if (row.method == "sgd") {
      for (BenchRow& r : report.rows)
        if (r.mean_elapsed_ms > 0.0) r.speedup_vs_sgd = row.mean_elapsed_ms / r.mean_elapsed_ms;
      break;
    }
  }
  return report;
}

std::string bench_csv(const BenchReport& report, const std::string& commented_config) {
  std::string out = commented_config;
  out += "# instances=" + std::to_string(report.instances) +
         " threads=" + std::to_string(report.threads) + " precision=" + report.precision + "\n";
  out += "# " + report.note + "\n";
  out += "method,instances,mean_iterations,mean_elapsed_ms,convergence_rate,speedup_vs_sgd\n";
  for (const BenchRow& r : report.rows) {
    out += r.method + "," + std::to_string(report.instances) + "," + f17(r.mean_iterations) +
           "," + f17(r.mean_elapsed_ms) + "," + f17(r.convergence_rate) + "," +
           f17(r.speedup_vs_sgd) + "\n";
  }
  return out;
}

std::string bench_table(const BenchReport& report) {
  char line[160];
  std::string out;
  std::snprintf(line, sizeof(line), "%-10s %12s %16s %12s %12s\n", "method", "mean iters",
                "mean time (ms)", "conv rate", "vs sgd");
  out += line;
  for (const BenchRow& r : report.rows) {
    std::snprintf(line, sizeof(line), "%-10s %12.3f %16.4f %12.3f %11.1fx\n", r.method.c_str(),
                  r.mean_iterations, r.mean_elapsed_ms, r.convergence_rate, r.speedup_vs_sgd);
    out += line;
  }
  std::snprintf(line, sizeof(line), "(%d instances, %d thread, %s; %s)\n", report.instances,
                report.threads, report.precision.c_str(), report.note.c_str());
  out += line;
  return out;
}

}  // namespace supermix
