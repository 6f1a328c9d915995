#pragma once

#include "nclab/bias.hpp"
#include "nclab/core.hpp"
#include "nclab/etf.hpp"
#include "nclab/loss.hpp"
#include "nclab/metrics.hpp"
#include "nclab/optimize.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

/// Configuration-driven experiment runner: parses the flat key/value config
/// grammar, trains, writes trajectory.csv / report.json / summary.csv, and
/// audits external feature/classifier files.
namespace nclab {

/// 17 significant digits: enough to round-trip any double exactly.
inline std::string format_real(double x) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string format_real_short(double x) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

struct SweepSpec {
  std::string variable;  // bias_mean_offset | lambda_b | batch_size
  std::vector<double> values;
};

struct ExperimentConfig {
  HyperParams hp;
  InitConfig init;
  LossKind loss = LossKind::BCE;
  TrainConfig train;
  long metrics_every = 1;
  std::filesystem::path output_dir = "out";
  std::optional<SweepSpec> sweep;
  bool metrics_centered = true;
  int n_thresholds = 200;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& v, const std::string& where) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || v.empty())
    fail("config", where + ": not a number: '" + v + "'");
  return x;
}

inline long parse_int(const std::string& v, const std::string& where) {
  char* end = nullptr;
  const long x = std::strtol(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size() || v.empty())
    fail("config", where + ": not an integer: '" + v + "'");
  return x;
}

inline bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail("config", where + ": not a boolean: '" + v + "'");
}

/// Key/value store that remembers which keys were consumed, so typos in a
/// config file surface as errors instead of silently applying defaults.
class KeyValues {
 public:
  void insert(const std::string& key, const std::string& value, int line) {
    if (kv_.count(key)) fail("config", "duplicate key '" + key + "' at line " + std::to_string(line));
    kv_[key] = value;
  }
  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  std::optional<std::string> take(const std::string& key) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return std::nullopt;
    taken_.insert(key);
    return it->second;
  }
  void check_all_taken() const {
    for (const auto& [k, v] : kv_)
      if (!taken_.count(k)) fail("config", "unknown key '" + k + "'");
  }

 private:
  std::map<std::string, std::string> kv_;
  std::set<std::string> taken_;
};

inline KeyValues parse_config_text(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail("config", "line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail("config", "line " + std::to_string(lineno) + ": empty key");
    kv.insert(key, value, lineno);
  }
  return kv;
}

inline std::vector<double> parse_value_list(const std::string& v, const std::string& where) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) out.push_back(parse_real(trim(item), where));
  if (out.empty()) fail("config", where + ": empty value list");
  return out;
}

}  // namespace detail

inline ExperimentConfig experiment_config_from_text(const std::string& text) {
  using detail::parse_bool;
  using detail::parse_int;
  using detail::parse_real;
  detail::KeyValues kv = detail::parse_config_text(text);
  ExperimentConfig cfg;

  const auto need = [&](const std::string& key) {
    auto v = kv.take(key);
    if (!v) fail("config", "missing required key '" + key + "'");
    return *v;
  };
  const auto opt_real = [&](const std::string& key, double dflt) {
    auto v = kv.take(key);
    return v ? parse_real(*v, key) : dflt;
  };
  const auto opt_int = [&](const std::string& key, long dflt) {
    auto v = kv.take(key);
    return v ? parse_int(*v, key) : dflt;
  };

  cfg.hp.K = static_cast<int>(parse_int(need("hp.K"), "hp.K"));
  cfg.hp.d = static_cast<int>(parse_int(need("hp.d"), "hp.d"));
  cfg.hp.n = static_cast<int>(parse_int(need("hp.n"), "hp.n"));
  cfg.hp.lambda_w = parse_real(need("hp.lambda_w"), "hp.lambda_w");
  cfg.hp.lambda_h = parse_real(need("hp.lambda_h"), "hp.lambda_h");
  cfg.hp.lambda_b = parse_real(need("hp.lambda_b"), "hp.lambda_b");
  cfg.hp.validate();

  cfg.init.seed = static_cast<std::uint64_t>(opt_int("init.seed", 0));
  cfg.init.bias_mean_offset = opt_real("init.bias_mean_offset", 0.0);

  cfg.loss = parse_loss_kind(need("loss"));

  if (auto m = kv.take("train.method")) {
    if (*m == "GD")
      cfg.train.method = Method::GD;
    else if (*m == "GDMomentum")
      cfg.train.method = Method::GDMomentum;
    else if (*m == "AdaptiveMoments")
      cfg.train.method = Method::AdaptiveMoments;
    else
      fail("config", "train.method: unknown method '" + *m + "'");
  }
  cfg.train.beta = opt_real("train.beta", cfg.train.beta);
  cfg.train.beta1 = opt_real("train.beta1", cfg.train.beta1);
  cfg.train.beta2 = opt_real("train.beta2", cfg.train.beta2);
  cfg.train.eps = opt_real("train.eps", cfg.train.eps);
  cfg.train.lr0 = opt_real("train.lr0", cfg.train.lr0);
  cfg.train.steps = parse_int(need("train.steps"), "train.steps");
  if (auto s = kv.take("train.schedule")) {
    if (*s == "Constant")
      cfg.train.schedule.kind = ScheduleKind::Constant;
    else if (*s == "Step")
      cfg.train.schedule.kind = ScheduleKind::Step;
    else if (*s == "Cosine")
      cfg.train.schedule.kind = ScheduleKind::Cosine;
    else
      fail("config", "train.schedule: unknown schedule '" + *s + "'");
  }
  cfg.train.schedule.period = opt_int("train.step_period", 1);
  cfg.train.schedule.gamma = opt_real("train.step_gamma", 0.1);
  cfg.train.schedule.total = opt_int("train.cosine_total", std::max(cfg.train.steps, 1L));
  cfg.train.schedule.lr_min = opt_real("train.cosine_lr_min", 0.0);
  if (auto b = kv.take("train.batch_size"))
    cfg.train.batch_size = parse_int(*b, "train.batch_size");
  cfg.train.grad_tol = opt_real("train.grad_tol", cfg.train.grad_tol);
  cfg.train.seed = static_cast<std::uint64_t>(opt_int("train.seed", 0));
  cfg.train.record_every = opt_int("train.record_every", 1);
  cfg.train.validate(cfg.hp.N());

  cfg.metrics_every = opt_int("metrics_every", cfg.train.record_every);
  if (cfg.metrics_every < 1) fail("config", "metrics_every must be >= 1");
  if (auto o = kv.take("output_dir")) cfg.output_dir = *o;
  if (auto c = kv.take("metrics.centered")) cfg.metrics_centered = parse_bool(*c, "metrics.centered");
  cfg.n_thresholds = static_cast<int>(opt_int("metrics.n_thresholds", 200));
  if (cfg.n_thresholds < 1) fail("config", "metrics.n_thresholds must be >= 1");

  if (auto var = kv.take("sweep.variable")) {
    SweepSpec sweep;
    sweep.variable = *var;
    if (sweep.variable != "bias_mean_offset" && sweep.variable != "lambda_b" &&
        sweep.variable != "batch_size")
      fail("config", "sweep.variable must be bias_mean_offset, lambda_b, or batch_size");
    sweep.values = detail::parse_value_list(need("sweep.values"), "sweep.values");
    cfg.sweep = std::move(sweep);
  } else if (kv.has("sweep.values")) {
    fail("config", "sweep.values given without sweep.variable");
  }

  kv.check_all_taken();
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("io", "cannot read config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return experiment_config_from_text(ss.str());
}

struct RunReport {
  ExperimentConfig cfg;
  MetricsReport final_metrics;
  bool converged = false;
  bool diverged = false;
  long steps_taken = 0;
  double wall_time_s = 0.0;
  std::uint64_t seed = 0;
  std::vector<TrajectoryRecord> records;
  ModelState final_state;
};

inline constexpr const char* kTrajectoryHeader =
    "step,objective,grad_inf_norm,nc1,nc2,nc3,accuracy,uniform_accuracy,e_com,e_dis,"
    "pos_mean,pos_std,neg_mean,neg_std,bias_mean,bias_std,rho,alpha_at_bias";

inline std::string metrics_csv_cells(const MetricsReport& m) {
  std::string s;
  const auto add = [&](double x) {
    s += ',';
    s += format_real(x);
  };
  add(m.nc1);
  add(m.nc2);
  add(m.nc3);
  add(m.accuracy);
  add(m.uniform_accuracy);
  add(m.e_com);
  add(m.e_dis);
  add(m.scores.pos_mean);
  add(m.scores.pos_std);
  add(m.scores.neg_mean);
  add(m.scores.neg_std);
  add(m.bias_mean);
  add(m.bias_std);
  add(m.rho);
  add(m.alpha_at_bias);
  return s;
}

inline std::string trajectory_row(const TrajectoryRecord& r) {
  std::string s = std::to_string(r.step);
  s += ',';
  s += format_real(r.objective);
  s += ',';
  s += format_real(r.grad_inf_norm);
  s += r.metrics ? metrics_csv_cells(*r.metrics) : std::string(15, ',');
  return s;
}

inline nlohmann::json to_json(const MetricsReport& m) {
  return nlohmann::json{{"nc1", m.nc1},
                        {"nc2", m.nc2},
                        {"nc3", m.nc3},
                        {"accuracy", m.accuracy},
                        {"uniform_accuracy", m.uniform_accuracy},
                        {"e_com", m.e_com},
                        {"e_dis", m.e_dis},
                        {"pos_mean", m.scores.pos_mean},
                        {"pos_std", m.scores.pos_std},
                        {"neg_mean", m.scores.neg_mean},
                        {"neg_std", m.scores.neg_std},
                        {"bias_mean", m.bias_mean},
                        {"bias_std", m.bias_std},
                        {"rho", m.rho},
                        {"alpha_at_bias", m.alpha_at_bias}};
}

inline nlohmann::json config_echo_json(const ExperimentConfig& cfg) {
  nlohmann::json j{{"hp.K", cfg.hp.K},
                   {"hp.d", cfg.hp.d},
                   {"hp.n", cfg.hp.n},
                   {"hp.lambda_w", cfg.hp.lambda_w},
                   {"hp.lambda_h", cfg.hp.lambda_h},
                   {"hp.lambda_b", cfg.hp.lambda_b},
                   {"init.seed", cfg.init.seed},
                   {"init.bias_mean_offset", cfg.init.bias_mean_offset},
                   {"loss", to_string(cfg.loss)},
                   {"train.method", cfg.train.method == Method::GD
                                        ? "GD"
                                        : cfg.train.method == Method::GDMomentum
                                              ? "GDMomentum"
                                              : "AdaptiveMoments"},
                   {"train.lr0", cfg.train.lr0},
                   {"train.schedule", cfg.train.schedule.kind == ScheduleKind::Constant
                                          ? "Constant"
                                          : cfg.train.schedule.kind == ScheduleKind::Step
                                                ? "Step"
                                                : "Cosine"},
                   {"train.steps", cfg.train.steps},
                   {"train.grad_tol", cfg.train.grad_tol},
                   {"train.seed", cfg.train.seed},
                   {"train.record_every", cfg.train.record_every},
                   {"metrics_every", cfg.metrics_every},
                   {"metrics.centered", cfg.metrics_centered},
                   {"metrics.n_thresholds", cfg.n_thresholds},
                   {"output_dir", cfg.output_dir.string()}};
  if (cfg.train.method == Method::GDMomentum) j["train.beta"] = cfg.train.beta;
  if (cfg.train.method == Method::AdaptiveMoments) {
    j["train.beta1"] = cfg.train.beta1;
    j["train.beta2"] = cfg.train.beta2;
    j["train.eps"] = cfg.train.eps;
  }
  if (cfg.train.schedule.kind == ScheduleKind::Step) {
    j["train.step_period"] = cfg.train.schedule.period;
    j["train.step_gamma"] = cfg.train.schedule.gamma;
  }
  if (cfg.train.schedule.kind == ScheduleKind::Cosine) {
    j["train.cosine_total"] = cfg.train.schedule.total;
    j["train.cosine_lr_min"] = cfg.train.schedule.lr_min;
  }
  if (cfg.train.batch_size) j["train.batch_size"] = *cfg.train.batch_size;
  if (cfg.sweep) {
    j["sweep.variable"] = cfg.sweep->variable;
    j["sweep.values"] = cfg.sweep->values;
  }
  return j;
}

inline nlohmann::json report_json(const RunReport& r) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& rec : r.records) {
    nlohmann::json jr{{"step", rec.step},
                      {"objective", rec.objective},
                      {"grad_inf_norm", rec.grad_inf_norm}};
    jr["metrics"] = rec.metrics ? to_json(*rec.metrics) : nlohmann::json(nullptr);
    records.push_back(std::move(jr));
  }
  return nlohmann::json{{"config", config_echo_json(r.cfg)},
                        {"converged", r.converged},
                        {"diverged", r.diverged},
                        {"steps_taken", r.steps_taken},
                        {"wall_time_s", r.wall_time_s},
                        {"seed", r.seed},
                        {"final_metrics", r.diverged ? nlohmann::json(nullptr)
                                                     : to_json(r.final_metrics)},
                        {"records", std::move(records)}};
}

/// Trains per the config and writes trajectory.csv and report.json into
/// cfg.output_dir. The output directory is validated before training starts.
inline RunReport run_experiment(const ExperimentConfig& cfg) {
  if (cfg.sweep) fail("config", "run_experiment received a sweep config; use run_sweep");
  cfg.hp.validate();
  cfg.train.validate(cfg.hp.N());
  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  const auto traj_path = cfg.output_dir / "trajectory.csv";
  const auto report_path = cfg.output_dir / "report.json";
  std::ofstream traj_out(traj_path, std::ios::binary);
  std::ofstream report_out(report_path, std::ios::binary);
  if (!traj_out || !report_out)
    fail("output_unwritable", "cannot write into '" + cfg.output_dir.string() + "'");

  RunReport r;
  r.cfg = cfg;
  r.seed = cfg.init.seed;
  const ModelState state0 = init_state(cfg.hp, cfg.init);
  const MetricsHook hook = [&](const ModelState& s, long step) -> std::optional<MetricsReport> {
    if (step % cfg.metrics_every != 0) return std::nullopt;
    return full_report(s, cfg.hp, cfg.metrics_centered, cfg.n_thresholds);
  };
  const auto t0 = std::chrono::steady_clock::now();
  Trajectory traj = train(state0, cfg.hp, cfg.loss, cfg.train, hook);
  r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.converged = traj.converged;
  r.diverged = traj.diverged;
  r.steps_taken = traj.steps_taken;
  r.records = std::move(traj.records);
  r.final_state = std::move(traj.final_state);
  if (!r.diverged) {
    r.final_metrics = full_report(r.final_state, cfg.hp, cfg.metrics_centered, cfg.n_thresholds);
    if (!r.records.empty() && !r.records.back().metrics)
      r.records.back().metrics = r.final_metrics;
  }

  traj_out << kTrajectoryHeader << '\n';
  for (const auto& rec : r.records) traj_out << trajectory_row(rec) << '\n';
  traj_out.close();
  report_out << report_json(r).dump(2) << '\n';
  report_out.close();
  if (!traj_out || !report_out)
    fail("output_unwritable", "failed writing outputs into '" + cfg.output_dir.string() + "'");
  return r;
}

inline constexpr const char* kSummaryHeader =
    "index,variable,value,converged,diverged,steps,objective,grad_inf_norm,nc1,nc2,nc3,"
    "accuracy,uniform_accuracy,e_com,e_dis,pos_mean,pos_std,neg_mean,neg_std,bias_mean,"
    "bias_std,rho,alpha_at_bias";

inline ExperimentConfig sweep_member_config(const ExperimentConfig& base, std::size_t index) {
  if (!base.sweep) fail("config", "not a sweep config");
  const SweepSpec& sweep = *base.sweep;
  if (index >= sweep.values.size()) fail("config", "sweep index out of range");
  const double v = sweep.values[index];
  ExperimentConfig sub = base;
  sub.sweep.reset();
  if (sweep.variable == "bias_mean_offset") {
    sub.init.bias_mean_offset = v;
  } else if (sweep.variable == "lambda_b") {
    if (!(v >= 0)) fail("config", "sweep lambda_b values must be >= 0");
    sub.hp.lambda_b = v;
  } else {
    const long bs = static_cast<long>(v);
    if (static_cast<double>(bs) != v || bs < 1)
      fail("config", "sweep batch_size values must be positive integers");
    sub.train.batch_size = bs;
  }
  char name[64];
  std::snprintf(name, sizeof name, "%02zu_%s=%s", index, sweep.variable.c_str(),
                format_real_short(v).c_str());
  sub.output_dir = base.output_dir / name;
  return sub;
}

/// Runs one experiment per sweep value (concurrently, each in its own
/// subdirectory) and writes summary.csv ordered by value index.
inline std::vector<RunReport> run_sweep(const ExperimentConfig& cfg, unsigned max_workers = 0) {
  if (!cfg.sweep) fail("config", "run_sweep needs a sweep config");
  const std::size_t count = cfg.sweep->values.size();
  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  std::ofstream summary_out(cfg.output_dir / "summary.csv", std::ios::binary);
  if (!summary_out)
    fail("output_unwritable", "cannot write into '" + cfg.output_dir.string() + "'");

  std::vector<RunReport> reports(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  unsigned workers = max_workers ? max_workers : std::thread::hardware_concurrency();
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(count)));
  const auto body = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        reports[i] = run_experiment(sweep_member_config(cfg, i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& th : pool) th.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  summary_out << kSummaryHeader << '\n';
  for (std::size_t i = 0; i < count; ++i) {
    const RunReport& r = reports[i];
    summary_out << i << ',' << cfg.sweep->variable << ','
                << format_real(cfg.sweep->values[i]) << ','
                << (r.converged ? 1 : 0) << ',' << (r.diverged ? 1 : 0) << ','
                << r.steps_taken << ','
                << format_real(r.records.empty() ? 0.0 : r.records.back().objective) << ','
                << format_real(r.records.empty() ? 0.0 : r.records.back().grad_inf_norm)
                << metrics_csv_cells(r.final_metrics) << '\n';
  }
  summary_out.close();
  if (!summary_out) fail("output_unwritable", "failed writing summary.csv");
  return reports;
}

inline void write_classifier_csv(const std::filesystem::path& path, const Matrix& W,
                                 const Vector& b) {
  if (W.rows() != b.size()) fail("shape", "classifier rows and bias length disagree");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("output_unwritable", "cannot write '" + path.string() + "'");
  for (Eigen::Index k = 0; k < W.rows(); ++k) {
    for (Eigen::Index j = 0; j < W.cols(); ++j) out << format_real(W(k, j)) << ',';
    out << format_real(b(k)) << '\n';
  }
  out.close();
  if (!out) fail("output_unwritable", "failed writing '" + path.string() + "'");
}

inline void write_features_csv(const std::filesystem::path& path, const Matrix& H,
                               const Labels& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != H.cols())
    fail("shape", "labels length does not match feature columns");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("output_unwritable", "cannot write '" + path.string() + "'");
  out << "label";
  for (Eigen::Index j = 0; j < H.rows(); ++j) out << ",f" << j;
  out << '\n';
  for (Eigen::Index c = 0; c < H.cols(); ++c) {
    out << labels[static_cast<std::size_t>(c)];
    for (Eigen::Index j = 0; j < H.rows(); ++j) out << ',' << format_real(H(j, c));
    out << '\n';
  }
  out.close();
  if (!out) fail("output_unwritable", "failed writing '" + path.string() + "'");
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(line);
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace detail

/// Reads a classifier file (K rows of w0,...,w{d-1},b; no header) and a
/// feature file (header label,f0,...,f{d-1}) and evaluates the full metric
/// report. n_for_alpha <= 0 means "use samples/K". The lambdas only feed the
/// bias-equation diagnostic.
inline MetricsReport ingest_features(const std::filesystem::path& features_path,
                                     const std::filesystem::path& classifier_path,
                                     double n_for_alpha, double lambda_w = 5e-4,
                                     double lambda_h = 5e-4, double lambda_b = 5e-4,
                                     bool centered = true, int n_thresholds = 200) {
  std::ifstream cin_(classifier_path);
  if (!cin_) fail("io", "cannot read classifier file '" + classifier_path.string() + "'");
  std::vector<std::vector<double>> wrows;
  std::string line;
  int lineno = 0;
  while (std::getline(cin_, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    std::vector<double> row;
    for (const auto& cell : cells)
      row.push_back(detail::parse_real(
          cell, classifier_path.string() + " line " + std::to_string(lineno)));
    if (!wrows.empty() && row.size() != wrows.front().size())
      fail("parse", classifier_path.string() + " line " + std::to_string(lineno) +
                        ": inconsistent column count");
    wrows.push_back(std::move(row));
  }
  if (wrows.size() < 2) fail("parse", classifier_path.string() + ": need at least 2 classifier rows");
  if (wrows.front().size() < 2)
    fail("parse", classifier_path.string() + ": rows must be w0,...,w{d-1},b");
  const int K = static_cast<int>(wrows.size());
  const int d = static_cast<int>(wrows.front().size()) - 1;
  Matrix W(K, d);
  Vector b(K);
  for (int k = 0; k < K; ++k) {
    for (int j = 0; j < d; ++j) W(k, j) = wrows[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
    b(k) = wrows[static_cast<std::size_t>(k)][static_cast<std::size_t>(d)];
  }

  std::ifstream fin(features_path);
  if (!fin) fail("io", "cannot read feature file '" + features_path.string() + "'");
  lineno = 0;
  if (!std::getline(fin, line))
    fail("parse", features_path.string() + ": empty file");
  ++lineno;
  const auto header = detail::split_csv_line(line);
  if (header.size() != static_cast<std::size_t>(d) + 1 || header[0] != "label")
    fail("parse", features_path.string() + " line 1: expected header label,f0,...,f" +
                      std::to_string(d - 1));
  for (int j = 0; j < d; ++j)
    if (header[static_cast<std::size_t>(j) + 1] != "f" + std::to_string(j))
      fail("parse", features_path.string() + " line 1: expected column f" + std::to_string(j));
  std::vector<double> values;
  Labels labels;
  while (std::getline(fin, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != static_cast<std::size_t>(d) + 1)
      fail("parse", features_path.string() + " line " + std::to_string(lineno) +
                        ": expected " + std::to_string(d + 1) + " cells");
    const std::string where = features_path.string() + " line " + std::to_string(lineno);
    const long label = detail::parse_int(cells[0], where);
    if (label < 1 || label > K)
      fail("label", where + ": class index " + std::to_string(label) + " outside [1, " +
                        std::to_string(K) + "]");
    labels.push_back(static_cast<int>(label));
    for (int j = 0; j < d; ++j)
      values.push_back(detail::parse_real(cells[static_cast<std::size_t>(j) + 1], where));
  }
  if (labels.empty()) fail("parse", features_path.string() + ": no samples");
  const Eigen::Index N = static_cast<Eigen::Index>(labels.size());
  Matrix H(d, N);
  for (Eigen::Index c = 0; c < N; ++c)
    for (int j = 0; j < d; ++j) H(j, c) = values[static_cast<std::size_t>(c) * d + j];

  HyperParams hp;
  hp.K = K;
  hp.d = d;
  hp.n = std::max<int>(1, static_cast<int>(N) / K);
  hp.lambda_w = lambda_w;
  hp.lambda_h = lambda_h;
  hp.lambda_b = lambda_b;
  const double n_eff = n_for_alpha > 0 ? n_for_alpha : static_cast<double>(N) / K;
  return full_report(W, H, b, labels, hp, n_eff, centered, n_thresholds);
}

}  // namespace nclab
