// End-to-end smoke test for the command-line tool. Invoked with the tool's
// path as argv[1]; runs each subcommand in the current working directory and
// checks exit codes and output shape.
#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

namespace {

int failures = 0;

#define SMOKE_CHECK(cond)                                                  \
  do {                                                                     \
    if (!(cond)) {                                                         \
      ++failures;                                                          \
      std::cerr << "FAILED at line " << __LINE__ << ": " #cond << "\n";    \
    }                                                                      \
  } while (0)

struct Result {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string g_cli;

std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result run(const std::string& args) {
  const std::string cmd = "'" + g_cli + "' " + args + " > smoke_out.txt 2> smoke_err.txt";
  const int status = std::system(cmd.c_str());
  Result r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_all("smoke_out.txt");
  r.err = read_all("smoke_err.txt");
  return r;
}

// Extracts the value of a "key=value" line from captured stdout.
std::string line_value(const std::string& out, const std::string& key) {
  std::istringstream in(out);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(key + "=", 0) == 0) return line.substr(key.size() + 1);
  return "";
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: cli_smoke <path-to-cli>\n";
    return 1;
  }
  g_cli = argv[1];
  namespace fs = std::filesystem;

  {
    const Result r = run("--help");
    SMOKE_CHECK(r.exit_code == 0);
    for (const char* sub : {"train", "sweep", "solve-bias", "etf", "metrics"})
      SMOKE_CHECK(r.out.find(sub) != std::string::npos);
  }

  {
    // With two classes and no bias decay the balanced root is b = ln(K-1) at
    // rho = 0; for K = 10 that is ln 9.
    const Result r = run("solve-bias --K 10 --rho 0 --lambda-b 0");
    SMOKE_CHECK(r.exit_code == 0);
    const double b = std::strtod(line_value(r.out, "b_star").c_str(), nullptr);
    SMOKE_CHECK(std::abs(b - std::log(9.0)) < 1e-9);
    SMOKE_CHECK(line_value(r.out, "separation_holds") == "false");
    SMOKE_CHECK(!line_value(r.out, "residual").empty());
    SMOKE_CHECK(!line_value(r.out, "a").empty());
  }

  {
    const Result r = run("etf --K 3 --d 4 --rho 7.5 --seed 2 --out smoke_etf.csv");
    SMOKE_CHECK(r.exit_code == 0);
    SMOKE_CHECK(line_value(r.out, "written") == "smoke_etf.csv");
    std::ifstream in("smoke_etf.csv");
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
      ++rows;
      SMOKE_CHECK(std::count(line.begin(), line.end(), ',') == 4);  // w0..w3,b
    }
    SMOKE_CHECK(rows == 3);
  }

  {
    std::ofstream feat("smoke_features.csv");
    feat << "label,f0,f1,f2,f3\n"
         << "1,1.0,0.1,0.0,0.2\n"
         << "1,1.1,0.0,0.1,0.1\n"
         << "2,-0.2,1.0,0.3,0.0\n"
         << "2,0.0,1.2,0.2,0.1\n"
         << "3,0.1,-0.1,-1.0,0.4\n"
         << "3,0.2,0.0,-1.1,0.3\n";
    feat.close();
    const Result r = run("metrics --features smoke_features.csv --classifier smoke_etf.csv");
    SMOKE_CHECK(r.exit_code == 0);
    SMOKE_CHECK(r.out.find("\"nc1\"") != std::string::npos);
    SMOKE_CHECK(r.out.find("\"uniform_accuracy\"") != std::string::npos);
  }

  {
    std::ofstream cfg("smoke_config.txt");
    cfg << "hp.K = 2\nhp.d = 2\nhp.n = 2\n"
        << "hp.lambda_w = 1e-3\nhp.lambda_h = 1e-3\nhp.lambda_b = 1e-4\n"
        << "loss = BCE\ntrain.steps = 5\n";
    cfg.close();
    const Result r = run("train --config smoke_config.txt --output-dir smoke_train_out");
    SMOKE_CHECK(r.exit_code == 0);
    SMOKE_CHECK(!line_value(r.out, "converged").empty());
    SMOKE_CHECK(line_value(r.out, "output_dir") == "smoke_train_out");
    SMOKE_CHECK(fs::exists("smoke_train_out/trajectory.csv"));
    SMOKE_CHECK(fs::exists("smoke_train_out/report.json"));
  }

  {
    std::ofstream cfg("smoke_sweep.txt");
    cfg << "hp.K = 2\nhp.d = 2\nhp.n = 2\n"
        << "hp.lambda_w = 1e-3\nhp.lambda_h = 1e-3\nhp.lambda_b = 1e-4\n"
        << "loss = CE\ntrain.steps = 3\n"
        << "sweep.variable = lambda_b\nsweep.values = 0,1e-4\n";
    cfg.close();
    const Result r = run("sweep --config smoke_sweep.txt --output-dir smoke_sweep_out");
    SMOKE_CHECK(r.exit_code == 0);
    SMOKE_CHECK(line_value(r.out, "runs") == "2");
    SMOKE_CHECK(fs::exists("smoke_sweep_out/summary.csv"));
    SMOKE_CHECK(!line_value(r.out, "run0.converged").empty());
  }

  {
    const Result r = run("frobnicate");
    SMOKE_CHECK(r.exit_code == 2);
    SMOKE_CHECK(r.err.find("usage") != std::string::npos);
  }

  {
    const Result r = run("train");
    SMOKE_CHECK(r.exit_code == 2);
    SMOKE_CHECK(r.err.find("usage") != std::string::npos);
  }

  {
    const Result r = run("metrics --features nope.csv --classifier smoke_etf.csv");
    SMOKE_CHECK(r.exit_code == 1);
    SMOKE_CHECK(r.err.rfind("error:", 0) == 0);
  }

  if (failures == 0) std::cout << "cli smoke: all checks passed\n";
  return failures;
}
