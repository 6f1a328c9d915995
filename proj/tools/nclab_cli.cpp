#include "nclab/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>

namespace {

int cmd_train(const std::string& config_path, const std::string& output_dir, bool sweep_mode) {
  nclab::ExperimentConfig cfg = nclab::load_experiment_config(config_path);
  if (!output_dir.empty()) cfg.output_dir = output_dir;
  if (sweep_mode) {
    const auto reports = nclab::run_sweep(cfg);
    std::cout << "runs=" << reports.size() << "\n"
              << "output_dir=" << cfg.output_dir.string() << "\n";
    for (std::size_t i = 0; i < reports.size(); ++i)
      std::cout << "run" << i << ".converged=" << (reports[i].converged ? "true" : "false")
                << "\n";
    return 0;
  }
  if (cfg.sweep)
    nclab::fail("config", "config contains a sweep section; use the sweep subcommand");
  const nclab::RunReport r = nclab::run_experiment(cfg);
  std::cout << "converged=" << (r.converged ? "true" : "false") << "\n"
            << "diverged=" << (r.diverged ? "true" : "false") << "\n"
            << "steps=" << r.steps_taken << "\n"
            << "objective="
            << nclab::format_real(r.records.empty() ? 0.0 : r.records.back().objective) << "\n"
            << "output_dir=" << cfg.output_dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"numerical laboratory for the layer-peeled classification model"};
  app.require_subcommand(1);

  std::string train_config, train_output;
  auto* train_cmd = app.add_subcommand("train", "run one experiment from a config file");
  train_cmd->add_option("--config", train_config, "experiment config file")->required();
  train_cmd->add_option("--output-dir", train_output, "override the config's output_dir");

  std::string sweep_config, sweep_output;
  auto* sweep_cmd = app.add_subcommand("sweep", "run a config's sweep, one run per value");
  sweep_cmd->add_option("--config", sweep_config, "experiment config file (with sweep keys)")
      ->required();
  sweep_cmd->add_option("--output-dir", sweep_output, "override the config's output_dir");

  int sb_K = 0;
  double sb_n = 1.0, sb_rho = 0.0;
  double sb_lw = 5e-4, sb_lh = 5e-4, sb_lb = 5e-4;
  auto* solve_cmd = app.add_subcommand("solve-bias", "solve the bias fixed-point equation");
  solve_cmd->add_option("--K", sb_K, "class count")->required();
  solve_cmd->add_option("--n", sb_n, "effective samples per class (default 1)");
  solve_cmd->add_option("--rho", sb_rho, "squared Frobenius norm of W")->required();
  solve_cmd->add_option("--lambda-w", sb_lw, "weight decay on W (default 5e-4)");
  solve_cmd->add_option("--lambda-h", sb_lh, "weight decay on H (default 5e-4)");
  solve_cmd->add_option("--lambda-b", sb_lb, "weight decay on b (default 5e-4)");

  int etf_K = 0, etf_d = 0;
  double etf_rho = 1.0;
  std::uint64_t etf_seed = 0;
  std::string etf_out;
  auto* etf_cmd = app.add_subcommand("etf", "write a simplex-ETF classifier file");
  etf_cmd->add_option("--K", etf_K, "class count")->required();
  etf_cmd->add_option("--d", etf_d, "feature dimension (>= K-1)")->required();
  etf_cmd->add_option("--rho", etf_rho, "squared Frobenius norm")->required();
  etf_cmd->add_option("--seed", etf_seed, "orientation seed (default 0)");
  etf_cmd->add_option("--out", etf_out, "output classifier csv")->required();

  std::string m_features, m_classifier;
  double m_n_alpha = 0.0, m_lw = 5e-4, m_lh = 5e-4, m_lb = 5e-4;
  bool m_uncentered = false;
  int m_thresholds = 200;
  auto* metrics_cmd = app.add_subcommand("metrics", "audit feature/classifier csv files");
  metrics_cmd->add_option("--features", m_features, "feature csv (label,f0,...)")->required();
  metrics_cmd->add_option("--classifier", m_classifier, "classifier csv (w0,...,b)")->required();
  metrics_cmd->add_option("--n-for-alpha", m_n_alpha,
                          "effective samples per class for the bias diagnostic "
                          "(default samples/K)");
  metrics_cmd->add_option("--lambda-w", m_lw, "weight decay on W (default 5e-4)");
  metrics_cmd->add_option("--lambda-h", m_lh, "weight decay on H (default 5e-4)");
  metrics_cmd->add_option("--lambda-b", m_lb, "weight decay on b (default 5e-4)");
  metrics_cmd->add_flag("--uncentered", m_uncentered,
                        "use the uncentered classifier in NC2/NC3");
  metrics_cmd->add_option("--n-thresholds", m_thresholds,
                          "uniform-accuracy threshold count (default 200)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_config, train_output, false);
    if (sweep_cmd->parsed()) return cmd_train(sweep_config, sweep_output, true);
    if (solve_cmd->parsed()) {
      const nclab::BiasProblem prob{sb_rho, sb_K, sb_n, sb_lw, sb_lh, sb_lb};
      const double b_star = nclab::solve_bias(prob);
      std::cout << "b_star=" << nclab::format_real(b_star) << "\n"
                << "residual=" << nclab::format_real(nclab::alpha_residual(b_star, prob)) << "\n"
                << "a=" << nclab::format_real(prob.a()) << "\n"
                << "separation_holds=" << (nclab::separation_holds(prob) ? "true" : "false")
                << "\n";
      return 0;
    }
    if (etf_cmd->parsed()) {
      const nclab::Matrix W =
          nclab::simplex_etf(nclab::EtfSpec{etf_K, etf_d, etf_rho, etf_seed});
      nclab::write_classifier_csv(etf_out, W, nclab::Vector::Zero(etf_K));
      std::cout << "written=" << etf_out << "\n";
      return 0;
    }
    if (metrics_cmd->parsed()) {
      const nclab::MetricsReport r =
          nclab::ingest_features(m_features, m_classifier, m_n_alpha, m_lw, m_lh, m_lb,
                                 !m_uncentered, m_thresholds);
      std::cout << nclab::to_json(r).dump(2) << "\n";
      return 0;
    }
  } catch (const nclab::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
