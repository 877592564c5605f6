#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xbart/config.hpp"
#include "xbart/dataset.hpp"
#include "xbart/error.hpp"
#include "xbart/random.hpp"
#include "xbart/sampler.hpp"

namespace xbart {

enum class Dgp { linear, single_index, trig_poly, max };

inline std::string_view to_string(Dgp d) {
  switch (d) {
    case Dgp::linear: return "linear";
    case Dgp::single_index: return "single_index";
    case Dgp::trig_poly: return "trig_poly";
    case Dgp::max: return "max";
  }
  return "?";
}

inline Dgp parse_dgp(std::string_view name) {
  if (name == "linear") return Dgp::linear;
  if (name == "single_index") return Dgp::single_index;
  if (name == "trig_poly") return Dgp::trig_poly;
  if (name == "max") return Dgp::max;
  throw InputError("unknown data-generating process '" + std::string(name) + "'");
}

inline std::size_t required_arity(Dgp d) {
  switch (d) {
    case Dgp::linear: return 2;
    case Dgp::single_index: return 10;
    case Dgp::trig_poly: return 4;
    case Dgp::max: return 3;
  }
  return 1;
}

struct DgpSpec {
  Dgp dgp = Dgp::linear;
  std::size_t n = 10000;
  std::size_t d = 30;
  double kappa = 1.0;
  std::uint64_t seed = 0;
  // Noise sd is kappa * sd(f) by default; set to use kappa * var(f).
  bool sigma_from_variance = false;

  void validate() const {
    if (n < 2) throw InputError("a data-generating process needs n >= 2");
    if (d < required_arity(dgp)) {
      throw InputError(std::string(to_string(dgp)) + " needs at least " +
                       std::to_string(required_arity(dgp)) + " predictors");
    }
    if (!(kappa > 0.0) || !std::isfinite(kappa)) throw InputError("noise multiplier must be positive");
  }
};

/// True regression function evaluated at one row.
inline double true_function(Dgp dgp, std::span<const double> x) {
  const std::size_t d = x.size();
  switch (dgp) {
    case Dgp::linear: {
      double f = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double gamma = -2.0 + 4.0 * static_cast<double>(j) / static_cast<double>(d - 1);
        f += x[j] * gamma;
      }
      return f;
    }
    case Dgp::single_index: {
      double a = 0.0;
      for (std::size_t j = 0; j < 10; ++j) {
        const double gamma = -1.5 + static_cast<double>(j) / 3.0;
        a += (x[j] - gamma) * (x[j] - gamma);
      }
      return 10.0 * std::sqrt(a) + std::sin(5.0 * a);
    }
    case Dgp::trig_poly:
      return 5.0 * std::sin(3.0 * x[0]) + 2.0 * x[1] * x[1] + 3.0 * x[2] * x[3];
    case Dgp::max:
      return std::max({x[0], x[1], x[2]});
  }
  return 0.0;
}

struct DgpSample {
  Dataset train;
  std::vector<double> train_f;
  Matrix test_x;
  std::vector<double> test_f;
  double sigma_true = 0.0;
};

namespace detail {

// Rows are drawn in order, each row's d predictors left to right.
inline Matrix draw_predictors(Rng& rng, std::size_t rows, std::size_t d) {
  Matrix x(rows, d);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < d; ++j) x(i, j) = rng.normal();
  }
  return x;
}

inline std::vector<double> evaluate(Dgp dgp, const Matrix& x) {
  std::vector<double> f(x.rows());
  std::vector<double> row(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) row[j] = x(i, j);
    f[i] = true_function(dgp, row);
  }
  return f;
}

}  // namespace detail

/// Draw order from one stream seeded by spec.seed: training predictors,
/// training noise, then holdout predictors (ceil(n / 4) rows).
inline DgpSample gen_dgp(const DgpSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Matrix train_x = detail::draw_predictors(rng, spec.n, spec.d);
  std::vector<double> train_f = detail::evaluate(spec.dgp, train_x);

  const double var_f = sample_variance(train_f);
  const double sigma = spec.sigma_from_variance ? spec.kappa * var_f : spec.kappa * std::sqrt(var_f);

  std::vector<double> y(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) y[i] = train_f[i] + sigma * rng.normal();

  const std::size_t n_test = (spec.n + 3) / 4;
  Matrix test_x = detail::draw_predictors(rng, n_test, spec.d);
  std::vector<double> test_f = detail::evaluate(spec.dgp, test_x);

  return DgpSample{Dataset(std::move(train_x), std::move(y)), std::move(train_f), std::move(test_x),
                   std::move(test_f), sigma};
}

inline double rmse(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw InputError("rmse inputs differ in length");
  if (pred.empty()) throw InputError("rmse needs at least one value");
  double ss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) ss += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(ss / static_cast<double>(pred.size()));
}

/// Standard error of the mean, sd / sqrt(k) with an (k - 1) denominator.
inline double standard_error(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  return std::sqrt(sample_variance(values) / static_cast<double>(values.size()));
}

struct BenchCell {
  DgpSpec dgp;
  XbartConfig config;
};

struct BenchRow {
  std::size_t cell = 0;
  Dgp dgp = Dgp::linear;
  std::size_t n = 0;
  double kappa = 1.0;
  std::size_t rep = 0;
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double fit_seconds = 0.0;
  double predict_seconds = 0.0;
  double sigma_true = 0.0;
  ResolvedConfig config;
  std::string error;

  bool ok() const noexcept { return error.empty(); }
};

struct BenchSummary {
  std::size_t cell = 0;
  Dgp dgp = Dgp::linear;
  std::size_t n = 0;
  double kappa = 1.0;
  std::size_t completed = 0;
  std::size_t failed = 0;
  double mean_rmse = std::numeric_limits<double>::quiet_NaN();
  double se_rmse = 0.0;
  double mean_fit_seconds = 0.0;
  double max_fit_seconds = 0.0;
  double mean_predict_seconds = 0.0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::vector<BenchSummary> summary;
};

/// Data and fit seeds for (cell, rep) are derived from the suite seed on
/// separate streams so cells can be rerun in isolation.
inline std::uint64_t bench_data_seed(std::uint64_t suite_seed, std::size_t cell, std::size_t rep) {
  return derive_seed(suite_seed, 2 * cell, rep);
}
inline std::uint64_t bench_fit_seed(std::uint64_t suite_seed, std::size_t cell, std::size_t rep) {
  return derive_seed(suite_seed, 2 * cell + 1, rep);
}

inline BenchRow run_replication(const BenchCell& cell, std::size_t cell_index, std::size_t rep,
                                std::uint64_t suite_seed) {
  using clock = std::chrono::steady_clock;
  BenchRow row;
  row.cell = cell_index;
  row.dgp = cell.dgp.dgp;
  row.n = cell.dgp.n;
  row.kappa = cell.dgp.kappa;
  row.rep = rep;
  try {
    DgpSpec spec = cell.dgp;
    spec.seed = bench_data_seed(suite_seed, cell_index, rep);
    const DgpSample sample = gen_dgp(spec);
    row.sigma_true = sample.sigma_true;

    XbartConfig cfg = cell.config;
    cfg.seed = bench_fit_seed(suite_seed, cell_index, rep);
    row.config = resolve(cfg, sample.train);

    const auto t0 = clock::now();
    const PosteriorDraws draws = fit(sample.train, cfg);
    const auto t1 = clock::now();
    const std::vector<double> pred = predict(draws, sample.test_x);
    const auto t2 = clock::now();

    row.fit_seconds = std::chrono::duration<double>(t1 - t0).count();
    row.predict_seconds = std::chrono::duration<double>(t2 - t1).count();
    row.rmse = rmse(pred, sample.test_f);
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  return row;
}

inline BenchSummary summarize(std::span<const BenchRow> rows, std::size_t cell_index, const BenchCell& cell) {
  BenchSummary s;
  s.cell = cell_index;
  s.dgp = cell.dgp.dgp;
  s.n = cell.dgp.n;
  s.kappa = cell.dgp.kappa;
  std::vector<double> r;
  double fit_total = 0.0;
  double pred_total = 0.0;
  for (const auto& row : rows) {
    if (row.cell != cell_index) continue;
    if (!row.ok()) {
      ++s.failed;
      continue;
    }
    r.push_back(row.rmse);
    fit_total += row.fit_seconds;
    pred_total += row.predict_seconds;
    s.max_fit_seconds = std::max(s.max_fit_seconds, row.fit_seconds);
  }
  s.completed = r.size();
  if (!r.empty()) {
    s.mean_rmse = mean(r);
    s.se_rmse = standard_error(r);
    s.mean_fit_seconds = fit_total / static_cast<double>(r.size());
    s.mean_predict_seconds = pred_total / static_cast<double>(r.size());
  }
  return s;
}

/// Runs every cell `replications` times. A failing replication is recorded
/// in its row and the suite carries on. `progress` is called after each row.
inline BenchReport run_benchmark(std::span<const BenchCell> suite, std::size_t replications,
                                 std::uint64_t suite_seed,
                                 const std::function<void(const BenchRow&)>& progress = {}) {
  if (suite.empty()) throw InputError("benchmark suite is empty");
  if (replications < 1) throw InputError("need at least one replication");
  BenchReport report;
  for (std::size_t c = 0; c < suite.size(); ++c) {
    for (std::size_t rep = 0; rep < replications; ++rep) {
      report.rows.push_back(run_replication(suite[c], c, rep, suite_seed));
      if (progress) progress(report.rows.back());
    }
  }
  for (std::size_t c = 0; c < suite.size(); ++c) report.summary.push_back(summarize(report.rows, c, suite[c]));
  return report;
}

inline void write_bench_csv(const BenchReport& report, std::ostream& out) {
  out << "dgp,n,kappa,rep,rmse,fit_seconds,predict_seconds\n";
  char buf[256];
  for (const auto& row : report.rows) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.17g,%zu,%.17g,%.6f,%.6f\n",
                  std::string(to_string(row.dgp)).c_str(), row.n, row.kappa, row.rep, row.rmse,
                  row.fit_seconds, row.predict_seconds);
    out << buf;
  }
}

inline std::string format_summary(const BenchReport& report) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-13s %8s %6s %4s %10s %8s %10s %10s\n", "dgp", "n", "kappa", "ok",
                "rmse", "se", "fit_s", "predict_s");
  out += buf;
  for (const auto& s : report.summary) {
    std::snprintf(buf, sizeof buf, "%-13s %8zu %6g %4zu %10.4f %8.4f %10.2f %10.3f\n",
                  std::string(to_string(s.dgp)).c_str(), s.n, s.kappa, s.completed, s.mean_rmse,
                  s.se_rmse, s.mean_fit_seconds, s.mean_predict_seconds);
    out += buf;
    if (s.failed > 0) {
      std::snprintf(buf, sizeof buf, "  (%zu replication(s) failed)\n", s.failed);
      out += buf;
    }
  }
  return out;
}

}  // namespace xbart
