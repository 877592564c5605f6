// xbart command-line interface: fit / predict / bench.
//
// Exit codes: 0 success, 2 input error, 3 numeric failure.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "xbart/xbart.hpp"

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

struct FitArgs {
  std::string data;
  std::string target;
  std::string out;
  bool no_header = false;
  std::optional<std::size_t> trees;
  std::size_t sweeps = 40;
  std::size_t burnin = 15;
  std::optional<double> tau;
  double alpha = 0.95;
  double beta = 1.25;
  std::optional<std::size_t> cutpoints;
  std::optional<std::size_t> mtry;
  std::uint64_t seed = 0;
  double a0 = 3.0;
  std::optional<double> eta;
  double null_multiplier = 1.0;
  int max_depth = 40;
  bool mh = false;
};

struct PredictArgs {
  std::string model;
  std::string data;
  std::string out;
  bool no_header = false;
};

struct BenchArgs {
  std::string suite;
  std::size_t reps = 5;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int run_fit(const FitArgs& a) {
  const xbart::Dataset data = xbart::load_csv(a.data, a.target, !a.no_header);
  xbart::XbartConfig cfg;
  cfg.num_trees = a.trees;
  cfg.num_sweeps = a.sweeps;
  cfg.burnin = a.burnin;
  cfg.tau = a.tau;
  cfg.alpha = a.alpha;
  cfg.beta = a.beta;
  cfg.num_cutpoints = a.cutpoints;
  cfg.mtry = a.mtry;
  cfg.seed = a.seed;
  cfg.sigma_prior_shape = a.a0;
  cfg.sigma_prior_scale = a.eta;
  cfg.null_weight_multiplier = a.null_multiplier;
  cfg.max_depth = a.max_depth;
  cfg.mh = a.mh;
  if (a.mh) std::cerr << "warning: --mh is experimental\n";

  auto draws = xbart::fit(data, cfg);
  const auto& rc = draws.config;
  std::cerr << "fitted " << rc.num_trees << " trees x " << rc.num_sweeps << " sweeps (burn-in "
            << rc.burnin << ", tau " << rc.tau << ", cut-points " << rc.num_cutpoints << ", mtry "
            << rc.mtry << ") on " << data.num_rows() << " rows\n";
  if (rc.mh) {
    std::cerr << "MH accepted " << draws.diagnostics.mh_accepted << " of " << draws.diagnostics.mh_proposals
              << " sweep proposals\n";
  }
  xbart::save_model(xbart::make_artifact(std::move(draws), data, a.target), a.out);
  return 0;
}

int run_predict(const PredictArgs& a) {
  const auto model = xbart::load_model(a.model);
  const auto x = xbart::load_features(a.data, model.training, !a.no_header);
  xbart::write_predictions(xbart::predict(model.draws, x), a.out);
  return 0;
}

int run_bench(const BenchArgs& a) {
  const auto suite = xbart::load_suite(a.suite);
  const std::uint64_t seed = a.seed.value_or(suite.seed);
  const auto report = xbart::run_benchmark(suite.cells, a.reps, seed, [](const xbart::BenchRow& row) {
    if (row.ok()) {
      std::fprintf(stderr, "%s n=%zu kappa=%g rep=%zu rmse=%.4f fit=%.2fs\n",
                   std::string(xbart::to_string(row.dgp)).c_str(), row.n, row.kappa, row.rep, row.rmse,
                   row.fit_seconds);
    } else {
      std::fprintf(stderr, "%s n=%zu kappa=%g rep=%zu FAILED: %s\n",
                   std::string(xbart::to_string(row.dgp)).c_str(), row.n, row.kappa, row.rep,
                   row.error.c_str());
    }
  });
  std::ofstream out(a.out);
  if (!out) throw xbart::InputError("cannot write '" + a.out + "'");
  xbart::write_bench_csv(report, out);
  std::cout << xbart::format_summary(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Accelerated Bayesian additive regression trees"};
  app.require_subcommand(1);

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit a forest to a CSV file and save the model");
  fit->add_option("--data", fa.data, "Training CSV")->required();
  fit->add_option("--target", fa.target, "Response column (header name or 0-based index)")->required();
  fit->add_option("--out", fa.out, "Model output path")->required();
  fit->add_flag("--no-header", fa.no_header, "CSV has no header row");
  fit->add_option("--trees", fa.trees, "Number of trees L (default 0.25 (log n)^(log log n))");
  fit->add_option("--sweeps", fa.sweeps, "Number of sweeps K")->capture_default_str();
  fit->add_option("--burnin", fa.burnin, "Burn-in sweeps I")->capture_default_str();
  fit->add_option("--tau", fa.tau, "Leaf prior variance (default 0.3 var(y) / L)");
  fit->add_option("--alpha", fa.alpha, "Depth prior alpha")->capture_default_str();
  fit->add_option("--beta", fa.beta, "Depth prior beta")->capture_default_str();
  fit->add_option("--cutpoints", fa.cutpoints, "Cut-points per variable C (default max(sqrt n, 100))");
  fit->add_option("--mtry", fa.mtry, "Variables considered per split after burn-in (default V)");
  fit->add_option("--seed", fa.seed, "Random seed")->capture_default_str();
  fit->add_option("--a0", fa.a0, "sigma^2 prior shape")->capture_default_str();
  fit->add_option("--eta", fa.eta, "sigma^2 prior scale (default var(y))");
  fit->add_option("--null-multiplier", fa.null_multiplier, "Extra weight on the no-split option")
      ->capture_default_str();
  fit->add_option("--max-depth", fa.max_depth, "Safety bound on tree depth")->capture_default_str();
  fit->add_flag("--mh", fa.mh, "Experimental: Metropolis-Hastings correction per sweep");

  PredictArgs pa;
  auto* pred = app.add_subcommand("predict", "Predict with a saved model");
  pred->add_option("--model", pa.model, "Model file")->required();
  pred->add_option("--data", pa.data, "Predictor CSV")->required();
  pred->add_option("--out", pa.out, "Prediction CSV output")->required();
  pred->add_flag("--no-header", pa.no_header, "CSV has no header row");

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Run a synthetic benchmark suite");
  bench->add_option("--suite", ba.suite, "Suite JSON file")->required();
  bench->add_option("--reps", ba.reps, "Replications per cell")->capture_default_str();
  bench->add_option("--out", ba.out, "Per-replication CSV output")->required();
  bench->add_option("--seed", ba.seed, "Suite seed (overrides the file)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*fit) return run_fit(fa);
    if (*pred) return run_predict(pa);
    if (*bench) return run_bench(ba);
  } catch (const xbart::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const xbart::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const xbart::AccountingError& e) {
    std::cerr << "internal accounting failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
