#include "nclab/experiment.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace nclab;
namespace fs = std::filesystem;

namespace {

const char* kBaseConfig =
    "hp.K = 2\n"
    "hp.d = 2\n"
    "hp.n = 2\n"
    "hp.lambda_w = 1e-3\n"
    "hp.lambda_h = 1e-3\n"
    "hp.lambda_b = 1e-4\n"
    "loss = BCE\n"
    "train.steps = 5\n";

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::path("unit_out") / name;
  fs::remove_all(p);
  return p;
}

std::size_t count_cells(const std::string& line) {
  std::size_t cells = 1;
  for (char ch : line)
    if (ch == ',') ++cells;
  return cells;
}

}  // namespace

TEST_CASE("doubles survive the CSV round trip", "[experiment]") {
  for (double x : {1.0 / 3.0, 1e-300, 3.141592653589793e17, -0.0, 5e-4,
                   -2.2250738585072014e-308}) {
    const std::string s = format_real(x);
    CHECK(std::strtod(s.c_str(), nullptr) == x);
  }
}

TEST_CASE("config parsing applies defaults", "[experiment]") {
  const ExperimentConfig cfg = experiment_config_from_text(kBaseConfig);
  CHECK(cfg.hp.K == 2);
  CHECK(cfg.hp.lambda_b == 1e-4);
  CHECK(cfg.loss == LossKind::BCE);
  CHECK(cfg.train.method == Method::GD);
  CHECK(cfg.train.lr0 == 0.5);
  CHECK(cfg.train.grad_tol == 1e-8);
  CHECK(cfg.train.record_every == 1);
  CHECK(cfg.metrics_every == 1);
  CHECK(cfg.init.seed == 0);
  CHECK(cfg.init.bias_mean_offset == 0.0);
  CHECK_FALSE(cfg.train.batch_size.has_value());
  CHECK(cfg.output_dir == fs::path("out"));
  CHECK(cfg.metrics_centered);
  CHECK(cfg.n_thresholds == 200);
  CHECK_FALSE(cfg.sweep.has_value());
}

TEST_CASE("config parsing reads every documented key", "[experiment]") {
  const std::string text =
      "# comment line\n"
      "hp.K = 3\n"
      "hp.d = 4   # trailing comment\n"
      "hp.n = 2\n"
      "hp.lambda_w = 5e-4\n"
      "hp.lambda_h = 5e-4\n"
      "hp.lambda_b = 0\n"
      "\n"
      "loss = CE\n"
      "init.seed = 42\n"
      "init.bias_mean_offset = 5\n"
      "train.method = AdaptiveMoments\n"
      "train.beta1 = 0.8\n"
      "train.beta2 = 0.95\n"
      "train.eps = 1e-7\n"
      "train.lr0 = 0.01\n"
      "train.schedule = Cosine\n"
      "train.cosine_total = 50\n"
      "train.cosine_lr_min = 1e-5\n"
      "train.steps = 100\n"
      "train.batch_size = 3\n"
      "train.grad_tol = 1e-9\n"
      "train.seed = 7\n"
      "train.record_every = 10\n"
      "metrics_every = 20\n"
      "metrics.centered = false\n"
      "metrics.n_thresholds = 64\n"
      "output_dir = some/dir\n";
  const ExperimentConfig cfg = experiment_config_from_text(text);
  CHECK(cfg.hp.K == 3);
  CHECK(cfg.loss == LossKind::CE);
  CHECK(cfg.init.seed == 42);
  CHECK(cfg.init.bias_mean_offset == 5.0);
  CHECK(cfg.train.method == Method::AdaptiveMoments);
  CHECK(cfg.train.beta1 == 0.8);
  CHECK(cfg.train.beta2 == 0.95);
  CHECK(cfg.train.eps == 1e-7);
  CHECK(cfg.train.lr0 == 0.01);
  CHECK(cfg.train.schedule.kind == ScheduleKind::Cosine);
  CHECK(cfg.train.schedule.total == 50);
  CHECK(cfg.train.schedule.lr_min == 1e-5);
  REQUIRE(cfg.train.batch_size.has_value());
  CHECK(*cfg.train.batch_size == 3);
  CHECK(cfg.train.grad_tol == 1e-9);
  CHECK(cfg.train.seed == 7);
  CHECK(cfg.train.record_every == 10);
  CHECK(cfg.metrics_every == 20);
  CHECK_FALSE(cfg.metrics_centered);
  CHECK(cfg.n_thresholds == 64);
  CHECK(cfg.output_dir == fs::path("some/dir"));
}

TEST_CASE("metrics cadence defaults to the record cadence", "[experiment]") {
  const ExperimentConfig cfg = experiment_config_from_text(
      std::string(kBaseConfig) + "train.record_every = 7\n");
  CHECK(cfg.metrics_every == 7);
}

TEST_CASE("step schedule keys", "[experiment]") {
  const ExperimentConfig cfg = experiment_config_from_text(
      std::string(kBaseConfig) +
      "train.schedule = Step\ntrain.step_period = 25\ntrain.step_gamma = 0.5\n");
  CHECK(cfg.train.schedule.kind == ScheduleKind::Step);
  CHECK(cfg.train.schedule.period == 25);
  CHECK(cfg.train.schedule.gamma == 0.5);
}

TEST_CASE("config errors are specific", "[experiment]") {
  const auto error_message = [](const std::string& text) -> std::string {
    try {
      experiment_config_from_text(text);
    } catch (const Error& e) {
      return e.what();
    }
    return "";
  };
  // Unknown key, naming the key.
  CHECK(error_message(std::string(kBaseConfig) + "hp.lambada = 1\n")
            .find("hp.lambada") != std::string::npos);
  // Duplicate key with its line number.
  CHECK(error_message(std::string(kBaseConfig) + "hp.K = 5\n")
            .find("duplicate key 'hp.K'") != std::string::npos);
  // Each required key is reported when missing.
  for (const char* key : {"hp.K", "hp.d", "hp.n", "hp.lambda_w", "hp.lambda_h",
                          "hp.lambda_b", "loss", "train.steps"}) {
    std::istringstream in(kBaseConfig);
    std::string line, text;
    while (std::getline(in, line))
      if (line.find(key) != 0) text += line + "\n";
    CHECK(error_message(text).find(key) != std::string::npos);
  }
  // Malformed values.
  CHECK(error_message(std::string(kBaseConfig) + "metrics_every = soon\n") != "");
  CHECK(error_message(std::string(kBaseConfig) + "metrics.centered = yep\n") != "");
  CHECK(error_message("hp.K\n") != "");
  CHECK(error_message("= 3\n") != "");
  // Sweep keys must come together.
  CHECK(error_message(std::string(kBaseConfig) + "sweep.values = 1,2\n")
            .find("sweep.variable") != std::string::npos);
  CHECK(error_message(std::string(kBaseConfig) + "sweep.variable = K\nsweep.values = 1\n") != "");
  CHECK(error_message(std::string(kBaseConfig) +
                      "sweep.variable = lambda_b\nsweep.values =\n") != "");
}

TEST_CASE("values may contain an equals sign", "[experiment]") {
  const ExperimentConfig cfg = experiment_config_from_text(
      std::string(kBaseConfig) + "output_dir = out=dir\n");
  CHECK(cfg.output_dir == fs::path("out=dir"));
}

TEST_CASE("run_experiment writes trajectory and report", "[experiment]") {
  ExperimentConfig cfg = experiment_config_from_text(kBaseConfig);
  cfg.train.record_every = 2;
  cfg.metrics_every = 4;
  cfg.train.grad_tol = 0.0;
  cfg.output_dir = fresh_dir("exp1");
  const RunReport r = run_experiment(cfg);
  CHECK(r.steps_taken == 5);
  CHECK_FALSE(r.diverged);

  const std::string traj = read_file(cfg.output_dir / "trajectory.csv");
  std::istringstream lines(traj);
  std::string line;
  REQUIRE(std::getline(lines, line));
  CHECK(line == kTrajectoryHeader);
  std::vector<std::string> rows;
  while (std::getline(lines, line)) rows.push_back(line);
  REQUIRE(rows.size() == 4);  // steps 0, 2, 4, 5
  for (const auto& row : rows) CHECK(count_cells(row) == 18);
  CHECK(rows[0].rfind("0,", 0) == 0);
  CHECK(rows[3].rfind("5,", 0) == 0);
  // Step 2 misses the metrics cadence: 15 empty metric cells.
  CHECK(rows[1].find(",,,,,,,,,,,,,,") != std::string::npos);
  // The last row always carries metrics even off-cadence.
  CHECK(rows[3].find(",,,,") == std::string::npos);

  const nlohmann::json j = nlohmann::json::parse(read_file(cfg.output_dir / "report.json"));
  CHECK(j["config"]["hp.K"] == 2);
  CHECK(j["config"]["loss"] == "BCE");
  CHECK(j["steps_taken"] == 5);
  CHECK(j["converged"] == false);
  CHECK(j["diverged"] == false);
  CHECK(j["seed"] == 0);
  CHECK(j["wall_time_s"].is_number());
  REQUIRE(j["records"].size() == 4);
  CHECK(j["records"][1]["metrics"].is_null());
  CHECK(j["records"][0]["metrics"]["rho"].is_number());
  CHECK(j["final_metrics"]["nc1"].is_number());
  CHECK(j["final_metrics"]["rho"] == r.final_metrics.rho);
}

TEST_CASE("run_experiment rejects sweep configs", "[experiment]") {
  ExperimentConfig cfg = experiment_config_from_text(
      std::string(kBaseConfig) + "sweep.variable = lambda_b\nsweep.values = 0,1e-4\n");
  cfg.output_dir = fresh_dir("expsweepreject");
  CHECK_THROWS_AS(run_experiment(cfg), Error);
}

TEST_CASE("identical configs produce byte-identical trajectories", "[experiment]") {
  ExperimentConfig cfg = experiment_config_from_text(kBaseConfig);
  cfg.train.steps = 40;
  cfg.train.record_every = 10;
  cfg.train.batch_size = 3;
  cfg.train.seed = 5;
  cfg.init.seed = 6;
  cfg.output_dir = fresh_dir("det_a");
  run_experiment(cfg);
  ExperimentConfig cfg2 = cfg;
  cfg2.output_dir = fresh_dir("det_b");
  run_experiment(cfg2);
  CHECK(read_file(cfg.output_dir / "trajectory.csv") ==
        read_file(cfg2.output_dir / "trajectory.csv"));
}

TEST_CASE("sweeps run members in their own directories", "[experiment]") {
  ExperimentConfig cfg = experiment_config_from_text(
      std::string(kBaseConfig) +
      "sweep.variable = lambda_b\nsweep.values = 0,5e-4\ntrain.record_every = 5\n");
  cfg.output_dir = fresh_dir("sweep1");
  const std::vector<RunReport> reports = run_sweep(cfg);
  REQUIRE(reports.size() == 2);
  CHECK(reports[0].cfg.hp.lambda_b == 0.0);
  CHECK(reports[1].cfg.hp.lambda_b == 5e-4);

  const std::string summary = read_file(cfg.output_dir / "summary.csv");
  std::istringstream lines(summary);
  std::string line;
  REQUIRE(std::getline(lines, line));
  CHECK(line == kSummaryHeader);
  std::vector<std::string> rows;
  while (std::getline(lines, line)) rows.push_back(line);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].rfind("0,lambda_b,0,", 0) == 0);
  CHECK(rows[1].rfind("1,lambda_b,", 0) == 0);
  for (const auto& row : rows) CHECK(count_cells(row) == 23);

  CHECK(fs::exists(cfg.output_dir / "00_lambda_b=0" / "trajectory.csv"));
  CHECK(fs::exists(cfg.output_dir / "01_lambda_b=0.0005" / "report.json"));
}

TEST_CASE("sweep members match solo runs byte for byte", "[experiment]") {
  ExperimentConfig cfg = experiment_config_from_text(
      std::string(kBaseConfig) +
      "sweep.variable = bias_mean_offset\nsweep.values = 0,2\n");
  cfg.output_dir = fresh_dir("sweep_iso");
  run_sweep(cfg);

  ExperimentConfig solo = sweep_member_config(cfg, 1);
  CHECK(solo.init.bias_mean_offset == 2.0);
  const fs::path member_dir = solo.output_dir;
  solo.output_dir = fresh_dir("sweep_iso_solo");
  run_experiment(solo);
  CHECK(read_file(member_dir / "trajectory.csv") ==
        read_file(solo.output_dir / "trajectory.csv"));
}

TEST_CASE("sweep value validation", "[experiment]") {
  ExperimentConfig cfg = experiment_config_from_text(
      std::string(kBaseConfig) +
      "sweep.variable = batch_size\nsweep.values = 2,2.5\n");
  CHECK_THROWS_AS(sweep_member_config(cfg, 1), Error);
  const ExperimentConfig ok = sweep_member_config(cfg, 0);
  REQUIRE(ok.train.batch_size.has_value());
  CHECK(*ok.train.batch_size == 2);
  CHECK_FALSE(ok.sweep.has_value());
  CHECK_THROWS_AS(sweep_member_config(cfg, 2), Error);
}

TEST_CASE("classifier and feature files round-trip through ingest", "[experiment]") {
  Rng rng(55);
  const int K = 3, d = 4, n = 3;
  const ModelState s = oracle::random_state(rng, K, d, n);
  const Labels labels = class_major_labels(K, n);
  const fs::path dir = fresh_dir("ingest1");
  fs::create_directories(dir);
  write_classifier_csv(dir / "classifier.csv", s.W, s.b);
  write_features_csv(dir / "features.csv", s.H, labels);

  const HyperParams hp{K, d, n, 5e-4, 5e-4, 5e-4};
  const MetricsReport direct = full_report(s.W, s.H, s.b, labels, hp, n);
  const MetricsReport loaded =
      ingest_features(dir / "features.csv", dir / "classifier.csv", n);
  CHECK(loaded.nc1 == direct.nc1);
  CHECK(loaded.nc2 == direct.nc2);
  CHECK(loaded.nc3 == direct.nc3);
  CHECK(loaded.accuracy == direct.accuracy);
  CHECK(loaded.uniform_accuracy == direct.uniform_accuracy);
  CHECK(loaded.e_com == direct.e_com);
  CHECK(loaded.e_dis == direct.e_dis);
  CHECK(loaded.scores.pos_mean == direct.scores.pos_mean);
  CHECK(loaded.scores.pos_std == direct.scores.pos_std);
  CHECK(loaded.scores.neg_mean == direct.scores.neg_mean);
  CHECK(loaded.scores.neg_std == direct.scores.neg_std);
  CHECK(loaded.rho == direct.rho);
  CHECK(loaded.bias_mean == direct.bias_mean);
  CHECK(loaded.bias_std == direct.bias_std);
  CHECK(loaded.alpha_at_bias == direct.alpha_at_bias);
}

TEST_CASE("ingest defaults the effective sample count to samples per class", "[experiment]") {
  Rng rng(56);
  const int K = 2, d = 3;
  // Unbalanced: 5 samples over 2 classes -> n_eff = 2.5.
  Matrix H(d, 5);
  for (int i = 0; i < d; ++i)
    for (int c = 0; c < 5; ++c) H(i, c) = rng.uniform(-1, 1);
  const Labels labels{1, 1, 2, 2, 2};
  Matrix W(K, d);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < d; ++j) W(i, j) = rng.uniform(-1, 1);
  Vector b(K);
  b << 0.1, -0.2;
  const fs::path dir = fresh_dir("ingest2");
  fs::create_directories(dir);
  write_classifier_csv(dir / "classifier.csv", W, b);
  write_features_csv(dir / "features.csv", H, labels);
  const MetricsReport r = ingest_features(dir / "features.csv", dir / "classifier.csv", 0.0);
  BiasProblem prob{r.rho, K, 2.5, 5e-4, 5e-4, 5e-4};
  CHECK(r.alpha_at_bias == alpha_residual(r.bias_mean, prob));
}

TEST_CASE("ingest reports malformed input with file and line", "[experiment]") {
  const fs::path dir = fresh_dir("ingest3");
  fs::create_directories(dir);
  {
    std::ofstream cls(dir / "classifier.csv");
    cls << "1,0,0.5\n0,1,-0.5\n";
    std::ofstream feat(dir / "features.csv");
    feat << "label,f0,f1\n1,0.1,0.2\n2,0.3,0.4\n7,0.5,0.6\n";
  }
  try {
    ingest_features(dir / "features.csv", dir / "classifier.csv", 1);
    FAIL("expected an error for the out-of-range label");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("features.csv") != std::string::npos);
    CHECK(msg.find("line 4") != std::string::npos);
    CHECK(e.code == "label");
  }

  {
    std::ofstream feat(dir / "features.csv");
    feat << "label,f0,f1\n1,0.1,oops\n2,0.3,0.4\n";
  }
  try {
    ingest_features(dir / "features.csv", dir / "classifier.csv", 1);
    FAIL("expected an error for the non-numeric cell");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  {
    std::ofstream feat(dir / "features.csv");
    feat << "label,f0\n1,0.1\n";
  }
  CHECK_THROWS_AS(ingest_features(dir / "features.csv", dir / "classifier.csv", 1), Error);

  {
    std::ofstream cls(dir / "classifier.csv");
    cls << "1,0,0.5\n0,1\n";
    std::ofstream feat(dir / "features.csv");
    feat << "label,f0,f1\n1,0.1,0.2\n2,0.3,0.4\n";
  }
  CHECK_THROWS_AS(ingest_features(dir / "features.csv", dir / "classifier.csv", 1), Error);

  CHECK_THROWS_AS(ingest_features(dir / "missing.csv", dir / "classifier.csv", 1), Error);
}

TEST_CASE("divergence shows up in the report", "[experiment]") {
  ExperimentConfig cfg = experiment_config_from_text(kBaseConfig);
  cfg.train.lr0 = 1e9;
  cfg.train.steps = 50;
  cfg.output_dir = fresh_dir("diverge");
  const RunReport r = run_experiment(cfg);
  CHECK(r.diverged);
  const nlohmann::json j = nlohmann::json::parse(read_file(cfg.output_dir / "report.json"));
  CHECK(j["diverged"] == true);
  CHECK(j["final_metrics"].is_null());
}
