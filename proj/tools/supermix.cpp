// Command-line front end: train-teacher, mix, distill, bench, analyze.
// Exit codes: 0 success, 1 invalid input, 2 runtime failure.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "supermix/bench.hpp"
#include "supermix/checkpoint.hpp"
#include "supermix/classifier.hpp"
#include "supermix/config.hpp"
#include "supermix/dataset.hpp"
#include "supermix/mixing.hpp"
#include "supermix/optimizer.hpp"
#include "supermix/pipeline.hpp"

namespace {

using namespace supermix;
namespace fs = std::filesystem;

// Independent RNG streams derived from the run seed. Commands that share a
// stream id see identical draws, so `mix` optimizes over the same synthetic
// dataset that `train-teacher` fitted.
constexpr uint64_t kStreamData = 0;
constexpr uint64_t kStreamTeacherInit = 1;
constexpr uint64_t kStreamTeacherTrain = 2;
constexpr uint64_t kStreamStudentInit = 3;
constexpr uint64_t kStreamStudentTrain = 4;
constexpr uint64_t kStreamPanels = uint64_t(1) << 20;

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string f4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

const std::string& require_path(const std::string& path, const char* what) {
  if (path.empty()) {
    throw std::invalid_argument(std::string(what) +
                                " is required; set it in the config file or with the matching --flag");
  }
  if (!fs::exists(path)) {
    throw std::invalid_argument(std::string(what) + " not found: " + path);
  }
  return path;
}

void write_text(const std::string& path, const std::string& text) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  fs::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + tmp.string());
    f << text;
    if (!f) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, p);
}

struct Corpus {
  LabeledDataset train;
  LabeledDataset test;
};

// Loads "<path>.train.smxd" / "<path>.test.smxd" when dataset.path is set,
// otherwise synthesizes both splits from the seed.
Corpus obtain_data(const RunConfig& cfg) {
  Corpus c;
  if (!cfg.dataset_path.empty()) {
    c.train = load_labeled_dataset(require_path(cfg.dataset_path + ".train.smxd", "dataset (train split)"));
    c.test = load_labeled_dataset(require_path(cfg.dataset_path + ".test.smxd", "dataset (test split)"));
    return c;
  }
  Rng rng = per_index_rng(cfg.seed, kStreamData);
  SynthResult r = synth_dataset(cfg.dataset, rng);
  c.train = std::move(r.train);
  c.test = std::move(r.test);
  return c;
}

ClassifierSpec obtain_teacher(const RunConfig& cfg, const Corpus& data) {
  StoredCheckpoint ck = load_checkpoint(require_path(cfg.teacher_path, "teacher checkpoint (teacher.path)"));
  const ClassifierSpec& m = ck.model;
  if (!data.train.images.empty()) {
    const Tensor3& x = data.train.images.front();
    if (m.width != x.width || m.height != x.height || m.channels != x.channels ||
        m.classes != data.train.classes) {
      throw std::invalid_argument("teacher checkpoint does not match the dataset (teacher " +
                                  std::to_string(m.width) + "x" + std::to_string(m.height) + "x" +
                                  std::to_string(m.channels) + ", " + std::to_string(m.classes) +
                                  " classes)");
    }
  }
  return ck.model;
}

BuildConfig make_build_config(const RunConfig& cfg) {
  BuildConfig b;
  b.mix = cfg.optimizer;
  b.kappa = cfg.kappa;
  b.teacher_accuracy_floor = cfg.teacher_floor;
  b.drop_unconverged = cfg.drop_unconverged;
  b.store_soft_labels = cfg.store_soft_labels;
  b.soft_label_tau = cfg.soft_label_tau;
  b.workers = cfg.workers;
  return b;
}

TrainSchedule make_schedule(const RunConfig& cfg) {
  TrainSchedule s = cfg.train;
  s.workers = cfg.workers;
  return s;
}

void export_panels(const RunConfig& cfg, const Corpus& data, const ClassifierSpec& teacher) {
  if (cfg.panels <= 0) return;
  if (mix_method_from_string(cfg.mix_method) != MixMethod::SuperMix) {
    std::cout << "note: mask panels are only produced for mix.method=supermix\n";
    return;
  }
  const std::size_t n = data.train.images.size();
  const int k = cfg.optimizer.k;
  if (n < std::size_t(k)) throw std::invalid_argument("dataset smaller than optimizer.k");
  for (int p = 0; p < cfg.panels; ++p) {
    Rng rng = per_index_rng(cfg.seed, kStreamPanels + uint64_t(p));
    MixInput in;
    std::vector<std::size_t> picked;
    while (picked.size() < std::size_t(k)) {
      std::size_t j = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      bool dup = false;
      for (std::size_t q : picked) dup = dup || (q == j);
      if (!dup) picked.push_back(j);
    }
    for (std::size_t j : picked) in.images.push_back(data.train.images[j]);
    MixResult res = supermix::supermix(std::move(in), teacher, cfg.optimizer, rng);
    export_mix_panel(cfg.out + "/panel" + std::to_string(p), res, config_echo(cfg));
  }
  std::cout << "wrote " << cfg.panels << " mask panel(s) under " << cfg.out << "\n";
}

void cmd_train_teacher(const RunConfig& cfg) {
  Corpus data = obtain_data(cfg);
  const Tensor3& x0 = data.train.images.at(0);
  Rng init = per_index_rng(cfg.seed, kStreamTeacherInit);
  ClassifierSpec model = make_classifier(arch_from_string(cfg.teacher_arch), x0.width, x0.height,
                                         x0.channels, data.train.classes, cfg.teacher_hidden, init);
  Rng train_rng = per_index_rng(cfg.seed, kStreamTeacherTrain);
  TrainTrace trace;
  model = train_classifier(std::move(model), data.train, make_schedule(cfg), train_rng, &trace);
  EvalResult ev = evaluate(model, data.test, cfg.workers);

  const std::string echo = config_echo(cfg);
  const std::string ckpt = cfg.out + "/teacher.smxm";
  save_checkpoint(ckpt, model, echo);

  std::ostringstream csv;
  csv << config_echo_commented(cfg);
  csv << "# final_test_top1=" << g17(ev.top1) << "\n";
  if (ev.top5) csv << "# final_test_top5=" << g17(*ev.top5) << "\n";
  csv << "epoch,train_loss,train_accuracy\n";
  for (std::size_t e = 0; e < trace.epochs.size(); ++e) {
    csv << e << "," << g17(trace.epochs[e].loss) << "," << g17(trace.epochs[e].accuracy) << "\n";
  }
  write_text(cfg.out + "/teacher_metrics.csv", csv.str());

  std::cout << "wrote " << ckpt << "\n";
  std::cout << "wrote " << cfg.out << "/teacher_metrics.csv\n";
  std::cout << "test top-1 accuracy: " << f4(ev.top1) << "\n";
  if (ev.top5) std::cout << "test top-5 accuracy: " << f4(*ev.top5) << "\n";
}

void cmd_mix(const RunConfig& cfg) {
  Corpus data = obtain_data(cfg);
  ClassifierSpec teacher = obtain_teacher(cfg, data);
  MixMethod method = mix_method_from_string(cfg.mix_method);
  MixedDataset mixed = build_mixed_dataset(data.train, teacher, method, make_build_config(cfg), cfg.seed);

  const std::string echo = config_echo(cfg);
  const std::string out_data = cfg.out + "/mixed.smxd";
  save_dataset(out_data, mixed, echo);

  std::size_t converged = 0;
  double iter_sum = 0.0;
  std::ostringstream csv;
  csv << config_echo_commented(cfg);
  for (std::size_t i = 0; i < mixed.images.size(); ++i) {
    converged += mixed.converged[i] ? 1 : 0;
    iter_sum += mixed.iterations[i];
  }
  const double n = double(mixed.images.size());
  csv << "# samples=" << mixed.images.size() << " convergence_rate=" << g17(n > 0 ? converged / n : 0.0)
      << " mean_iterations=" << g17(n > 0 ? iter_sum / n : 0.0) << "\n";
  csv << "index,iterations,converged,pseudo_class\n";
  for (std::size_t i = 0; i < mixed.images.size(); ++i) {
    csv << i << "," << mixed.iterations[i] << "," << int(mixed.converged[i]) << ","
        << mixed.pseudo_classes[i] << "\n";
  }
  write_text(cfg.out + "/mix_stats.csv", csv.str());

  std::cout << "wrote " << out_data << " (" << mixed.images.size() << " samples)\n";
  std::cout << "wrote " << cfg.out << "/mix_stats.csv\n";
  if (n > 0) {
    std::cout << "convergence rate: " << f4(converged / n) << ", mean iterations: " << f4(iter_sum / n)
              << "\n";
  }
  export_panels(cfg, data, teacher);
}

void cmd_distill(const RunConfig& cfg) {
  Corpus data = obtain_data(cfg);
  DistillObjective obj = distill_objective_from_string(cfg.distill_objective);

  MixedDataset dprime;
  if (!cfg.dprime_path.empty()) {
    dprime = load_mixed_dataset(require_path(cfg.dprime_path, "mixed dataset (mix.dprime_path)"));
  }

  ClassifierSpec teacher;
  const ClassifierSpec* teacher_ptr = nullptr;
  if (obj != DistillObjective::Ce) {
    teacher = obtain_teacher(cfg, data);
    teacher_ptr = &teacher;
  }

  if (cfg.distill_seeds < 1) throw std::invalid_argument("distill.seeds must be >= 1");

  DistillConfig dc;
  dc.objective = obj;
  dc.schedule = make_schedule(cfg);
  dc.tau = cfg.tau;
  dc.lambda_kd = cfg.lambda_kd;

  const Tensor3& x0 = data.train.images.at(0);
  std::vector<double> finals;
  for (int s = 0; s < cfg.distill_seeds; ++s) {
    const uint64_t run_seed = cfg.seed + uint64_t(s);
    Rng init = per_index_rng(run_seed, kStreamStudentInit);
    ClassifierSpec student = make_classifier(arch_from_string(cfg.student_arch), x0.width, x0.height,
                                             x0.channels, data.train.classes, cfg.student_hidden, init);
    Rng train_rng = per_index_rng(run_seed, kStreamStudentTrain);
    DistillMetrics metrics;
    student = distill(std::move(student), teacher_ptr, data.train, dprime, dc, train_rng, &data.test,
                      &metrics);
    const double final_top1 = metrics.test_top1.empty() ? 0.0 : metrics.test_top1.back();
    finals.push_back(final_top1);

    std::ostringstream csv;
    csv << config_echo_commented(cfg);
    csv << "# run_seed=" << run_seed << "\n";
    csv << "epoch,train_loss,train_accuracy,test_top1\n";
    for (std::size_t e = 0; e < metrics.train.size(); ++e) {
      csv << e << "," << g17(metrics.train[e].loss) << "," << g17(metrics.train[e].accuracy) << ","
          << g17(e < metrics.test_top1.size() ? metrics.test_top1[e] : 0.0) << "\n";
    }
    write_text(cfg.out + "/distill_trace_seed" + std::to_string(run_seed) + ".csv", csv.str());
    std::cout << "seed " << run_seed << ": test top-1 " << f4(final_top1) << "\n";
  }

  double mean = 0.0;
  for (double v : finals) mean += v;
  mean /= double(finals.size());
  double var = 0.0;
  for (double v : finals) var += (v - mean) * (v - mean);
  const double stdev = finals.size() > 1 ? std::sqrt(var / double(finals.size() - 1)) : 0.0;

  std::ostringstream csv;
  csv << config_echo_commented(cfg);
  csv << "objective,seeds,mean_test_top1,std_test_top1\n";
  csv << to_string(obj) << "," << finals.size() << "," << g17(mean) << "," << g17(stdev) << "\n";
  write_text(cfg.out + "/distill_summary.csv", csv.str());

  std::cout << "wrote " << cfg.out << "/distill_summary.csv\n";
  std::cout << "mean test top-1: " << f4(mean) << " +/- " << f4(stdev) << " over " << finals.size()
            << " seed(s)\n";
}

void cmd_bench(const RunConfig& cfg) {
  Corpus data = obtain_data(cfg);
  ClassifierSpec teacher = obtain_teacher(cfg, data);
  std::vector<OptimMethod> methods = parse_method_list(cfg.bench_methods);
  BenchReport report = run_bench(data.train, teacher, cfg.optimizer, methods, cfg.bench_instances,
                                 cfg.seed, cfg.bench_warmup);
  write_text(cfg.out + "/bench.csv", bench_csv(report, config_echo_commented(cfg)));
  std::cout << bench_table(report);
  std::cout << "wrote " << cfg.out << "/bench.csv\n";
}

void cmd_analyze(const RunConfig& cfg) {
  Corpus data = obtain_data(cfg);
  ClassifierSpec teacher = obtain_teacher(cfg, data);

  const std::size_t avail = data.train.images.size();
  if (cfg.analyze_images < 1) throw std::invalid_argument("analyze.images must be >= 1");
  const std::size_t n = std::min(std::size_t(cfg.analyze_images), avail);
  int top_n = cfg.analyze_top_n;
  if (top_n < 1) throw std::invalid_argument("analyze.top_n must be >= 1");
  if (top_n > data.train.classes) {
    top_n = data.train.classes;
    std::cout << "note: analyze.top_n clamped to the class count (" << top_n << ")\n";
  }

  std::vector<Tensor3> originals(data.train.images.begin(), data.train.images.begin() + n);

  struct Row {
    std::string name;
    std::vector<double> profile;
  };
  std::vector<Row> rows;
  rows.push_back({"original", smoothness_profile(teacher, originals, top_n, cfg.workers)});

  BuildConfig b = make_build_config(cfg);
  // kappa chosen so floor(kappa * |D|) lands exactly on n samples per method.
  b.kappa = (double(n) + 0.5) / double(avail);
  b.drop_unconverged = false;
  b.store_soft_labels = false;
  for (MixMethod m : {MixMethod::MixUp, MixMethod::CutMix, MixMethod::SuperMix}) {
    MixedDataset md = build_mixed_dataset(data.train, teacher, m, b, cfg.seed);
    if (md.images.size() != n) {
      throw std::runtime_error("mixed sample count mismatch for " + to_string(m));
    }
    rows.push_back({to_string(m), smoothness_profile(teacher, md.images, top_n, cfg.workers)});
  }

  std::ostringstream csv;
  csv << config_echo_commented(cfg);
  csv << "# images=" << n << " top_n=" << top_n << "\n";
  csv << "method";
  for (int j = 1; j <= top_n; ++j) csv << ",p" << j;
  csv << "\n";
  for (const Row& r : rows) {
    csv << r.name;
    for (double v : r.profile) csv << "," << g17(v);
    csv << "\n";
  }
  write_text(cfg.out + "/profiles.csv", csv.str());

  std::cout << "wrote " << cfg.out << "/profiles.csv (" << n << " images per method)\n";
  for (const Row& r : rows) {
    std::cout << "  " << r.name << ": top-1 mass " << f4(r.profile.at(0)) << "\n";
  }
  export_panels(cfg, data, teacher);
}

struct SubCtx {
  CLI::App* sub = nullptr;
  std::string config_path;
  std::map<std::string, std::string> values;
};

void add_common_options(CLI::App* sub, SubCtx& ctx) {
  ctx.sub = sub;
  sub->add_option("--config", ctx.config_path, "configuration file with one `key = value` per line");
  for (const std::string& key : config_keys()) {
    sub->add_option("--" + key, ctx.values[key], "override " + key)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  }
}

RunConfig resolve_config(const SubCtx& ctx) {
  RunConfig cfg;
  if (!ctx.config_path.empty()) cfg = parse_config_file(require_path(ctx.config_path, "config file"));
  for (const std::string& key : config_keys()) {
    if (ctx.sub->count("--" + key) > 0) apply_config_entry(cfg, key, ctx.values.at(key));
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"supervised image mixing toolkit"};
  app.require_subcommand(1);

  SubCtx ctx_train, ctx_mix, ctx_distill, ctx_bench, ctx_analyze;
  add_common_options(app.add_subcommand("train-teacher", "fit a teacher classifier and save a checkpoint"),
                     ctx_train);
  add_common_options(app.add_subcommand("mix", "build a mixed dataset with a trained teacher"), ctx_mix);
  add_common_options(app.add_subcommand("distill", "train a student, optionally on mixed data"),
                     ctx_distill);
  add_common_options(app.add_subcommand("bench", "time the mask optimizers on identical instances"),
                     ctx_bench);
  add_common_options(app.add_subcommand("analyze", "teacher output profiles on original and mixed data"),
                     ctx_analyze);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (ctx_train.sub->parsed()) cmd_train_teacher(resolve_config(ctx_train));
    if (ctx_mix.sub->parsed()) cmd_mix(resolve_config(ctx_mix));
    if (ctx_distill.sub->parsed()) cmd_distill(resolve_config(ctx_distill));
    if (ctx_bench.sub->parsed()) cmd_bench(resolve_config(ctx_bench));
    if (ctx_analyze.sub->parsed()) cmd_analyze(resolve_config(ctx_analyze));
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
