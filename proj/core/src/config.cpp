#include "supermix/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "supermix/objective.hpp"
#include "supermix/pipeline.hpp"

namespace supermix {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

double parse_f64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (...) {
    throw std::invalid_argument("config: bad number for " + key + ": '" + v + "'");
  }
}

long long parse_i64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    long long d = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (...) {
    throw std::invalid_argument("config: bad integer for " + key + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ','))
    out.push_back(static_cast<int>(parse_i64(key, trim(item))));
  return out;
}

std::string format_f64(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_int_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

struct Entry {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define F64_FIELD(KEY, EXPR)                                                            \
  {KEY, [](RunConfig& c, const std::string& v) { c.EXPR = parse_f64(KEY, v); },         \
   [](const RunConfig& c) { return format_f64(c.EXPR); }}
#define INT_FIELD(KEY, EXPR)                                                            \
  {KEY, [](RunConfig& c, const std::string& v) { c.EXPR = static_cast<int>(parse_i64(KEY, v)); }, \
   [](const RunConfig& c) { return std::to_string(c.EXPR); }}
#define BOOL_FIELD(KEY, EXPR)                                                           \
  {KEY, [](RunConfig& c, const std::string& v) { c.EXPR = parse_bool(KEY, v); },        \
   [](const RunConfig& c) { return c.EXPR ? "true" : "false"; }}
#define STR_FIELD(KEY, EXPR)                                                            \
  {KEY, [](RunConfig& c, const std::string& v) { c.EXPR = v; },                         \
   [](const RunConfig& c) { return c.EXPR; }}
#define ILIST_FIELD(KEY, EXPR)                                                          \
  {KEY, [](RunConfig& c, const std::string& v) { c.EXPR = parse_int_list(KEY, v); },    \
   [](const RunConfig& c) { return format_int_list(c.EXPR); }}

const std::vector<Entry>& schema() {
  static const std::vector<Entry> table = {
      {"seed",
       [](RunConfig& c, const std::string& v) {
         c.seed = static_cast<uint64_t>(parse_i64("seed", v));
       },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      INT_FIELD("workers", workers),
      STR_FIELD("out", out),

      INT_FIELD("dataset.classes", dataset.classes),
      INT_FIELD("dataset.width", dataset.width),
      INT_FIELD("dataset.height", dataset.height),
      INT_FIELD("dataset.channels", dataset.channels),
      INT_FIELD("dataset.train_count", dataset.train_count),
      INT_FIELD("dataset.test_count", dataset.test_count),
      F64_FIELD("dataset.noise", dataset.noise),
      F64_FIELD("dataset.position_jitter", dataset.position_jitter),
      STR_FIELD("dataset.path", dataset_path),

      {"teacher.arch",
       [](RunConfig& c, const std::string& v) {
         arch_from_string(v);  // validate
         c.teacher_arch = v;
       },
       [](const RunConfig& c) { return c.teacher_arch; }},
      ILIST_FIELD("teacher.hidden", teacher_hidden),
      STR_FIELD("teacher.path", teacher_path),
      {"student.arch",
       [](RunConfig& c, const std::string& v) {
         arch_from_string(v);
         c.student_arch = v;
       },
       [](const RunConfig& c) { return c.student_arch; }},
      ILIST_FIELD("student.hidden", student_hidden),

      F64_FIELD("train.lr", train.lr),
      F64_FIELD("train.momentum", train.momentum),
      F64_FIELD("train.weight_decay", train.weight_decay),
      INT_FIELD("train.epochs", train.epochs),
      INT_FIELD("train.batch", train.batch),
      ILIST_FIELD("train.milestones", train.milestones),
      F64_FIELD("train.lr_decay", train.lr_decay),

      {"optimizer.method",
       [](RunConfig& c, const std::string& v) { c.optimizer.method = optim_method_from_string(v); },
       [](const RunConfig& c) { return to_string(c.optimizer.method); }},
      INT_FIELD("optimizer.k", optimizer.k),
      F64_FIELD("optimizer.alpha", optimizer.alpha),
      F64_FIELD("optimizer.sigma", optimizer.sigma),
      INT_FIELD("optimizer.grid_w", optimizer.grid_w),
      INT_FIELD("optimizer.grid_h", optimizer.grid_h),
      INT_FIELD("optimizer.max_iters", optimizer.max_iters),
      F64_FIELD("optimizer.denom_epsilon", optimizer.denom_epsilon),
      F64_FIELD("optimizer.sgd_lr", optimizer.sgd_lr),

      F64_FIELD("objective.lambda_s", optimizer.objective.lambda_s),
      F64_FIELD("objective.lambda_sigma", optimizer.objective.lambda_sigma),
      F64_FIELD("objective.kl_epsilon", optimizer.objective.kl_epsilon),
      {"objective.divergence_direction",
       [](RunConfig& c, const std::string& v) {
         c.optimizer.objective.divergence_direction = divergence_direction_from_string(v);
       },
       [](const RunConfig& c) { return to_string(c.optimizer.objective.divergence_direction); }},

      {"mix.method",
       [](RunConfig& c, const std::string& v) {
         mix_method_from_string(v);
         c.mix_method = v;
       },
       [](const RunConfig& c) { return c.mix_method; }},
      F64_FIELD("mix.kappa", kappa),
      F64_FIELD("mix.teacher_floor", teacher_floor),
      BOOL_FIELD("mix.drop_unconverged", drop_unconverged),
      BOOL_FIELD("mix.store_soft_labels", store_soft_labels),
      F64_FIELD("mix.soft_label_tau", soft_label_tau),
      INT_FIELD("mix.panels", panels),
      STR_FIELD("mix.dprime_path", dprime_path),

      {"distill.objective",
       [](RunConfig& c, const std::string& v) {
         distill_objective_from_string(v);
         c.distill_objective = v;
       },
       [](const RunConfig& c) { return c.distill_objective; }},
      F64_FIELD("distill.tau", tau),
      F64_FIELD("distill.lambda_kd", lambda_kd),
      INT_FIELD("distill.seeds", distill_seeds),

      INT_FIELD("bench.instances", bench_instances),
      STR_FIELD("bench.methods", bench_methods),
      BOOL_FIELD("bench.warmup", bench_warmup),

      INT_FIELD("analyze.top_n", analyze_top_n),
      INT_FIELD("analyze.images", analyze_images),
  };
  return table;
}

#undef F64_FIELD
#undef INT_FIELD
#undef BOOL_FIELD
#undef STR_FIELD
#undef ILIST_FIELD

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Entry& e : schema()) keys.push_back(e.key);
  return keys;
}

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const Entry& e : schema()) {
    if (key == e.key) {
      e.set(cfg, value);
      return;
    }
  }
  throw std::invalid_argument("config: unknown key '" + key + "'");
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("config: cannot open " + path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    std::size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ": line " + std::to_string(lineno) +
                                  " is not 'key = value': " + line);
    try {
      apply_config_entry(cfg, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(path + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

std::string config_echo(const RunConfig& cfg) {
  std::string out;
  for (const Entry& e : schema()) {
    out += e.key;
    out += '=';
    out += e.get(cfg);
    out += '\n';
  }
  return out;
}

std::string config_echo_commented(const RunConfig& cfg) {
  std::istringstream in(config_echo(cfg));
  std::string out, line;
  while (std::getline(in, line)) out += "# " + line + "\n";
  return out;
}

}  // namespace supermix
