#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "stats.hpp"
#include "xbart/dgp.hpp"
#include "xbart/sampler.hpp"

namespace {

using xbart::Dataset;
using xbart::Matrix;
using xbart::XbartConfig;

Dataset linear_data(std::size_t n, std::size_t v, unsigned seed, Matrix* test = nullptr) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  Matrix x(n, v);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < v; ++j) x(i, j) = nd(gen);
    y[i] = 2.0 * x(i, 0) + nd(gen);
  }
  if (test) {
    *test = Matrix(n / 4, v);
    for (std::size_t i = 0; i < n / 4; ++i) {
      for (std::size_t j = 0; j < v; ++j) (*test)(i, j) = nd(gen);
    }
  }
  return Dataset(std::move(x), std::move(y));
}

TEST(Sigma2, PosteriorScalesWithResiduals) {
  const std::vector<double> r{1.0, -2.0, 0.5};
  std::vector<double> r3;
  for (double v : r) r3.push_back(3.0 * v);
  const auto a = xbart::sigma2_posterior(r, 3.0, 0.0 + 1e-300);
  const auto b = xbart::sigma2_posterior(r3, 3.0, 1e-300);
  EXPECT_DOUBLE_EQ(a.shape, b.shape);
  EXPECT_NEAR(b.scale, 9.0 * a.scale, 1e-12);
  EXPECT_DOUBLE_EQ(a.shape, 3.0);
  EXPECT_THROW(xbart::sigma2_posterior(r, 0.0, 1.0), xbart::ContractViolation);
  EXPECT_THROW(xbart::sigma2_posterior(r, 1.0, 0.0), xbart::ContractViolation);
}

TEST(Sigma2, ZeroResidualDrawsMatchInverseGammaMean) {
  const std::vector<double> r(10, 0.0);
  const auto p = xbart::sigma2_posterior(r, 2.0, 2.0);
  EXPECT_DOUBLE_EQ(p.shape, 6.0);
  EXPECT_DOUBLE_EQ(p.scale, 1.0);
  xbart::Rng rng(10);
  std::vector<double> xs(100000);
  for (auto& x : xs) x = xbart::update_sigma2(r, 2.0, 2.0, rng);
  const auto m = stats::moments(xs);
  EXPECT_LE(std::abs(m.mean - 0.2), 3 * m.se_mean());
  // IG(6, 1) variance 1 / (25 * 4).
  EXPECT_LE(std::abs(m.var - 0.01), 3 * m.se_var());
}

TEST(Sigma2, ConcentratesForLargeSamples) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd(0.0, std::sqrt(2.5));
  std::vector<double> r(100000);
  for (auto& v : r) v = nd(gen);
  xbart::Rng rng(4);
  for (int k = 0; k < 200; ++k) EXPECT_NEAR(xbart::update_sigma2(r, 3.0, 1.0, rng), 2.5, 0.05 * 2.5);
}

TEST(VariableWeights, Bookkeeping) {
  xbart::Rng rng(1);
  const std::vector<double> wb{3, 1, 2};
  const std::vector<std::size_t> old{2, 0, 1}, neu{0, 3, 0};
  const auto [w_bar, w] = xbart::update_variable_weights(wb, old, neu, rng);
  EXPECT_EQ(w_bar, (std::vector<double>{1, 4, 1}));
  double s = 0.0;
  for (double v : w) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
    s += v;
  }
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(VariableWeights, CorruptCountsAreAccountingErrors) {
  xbart::Rng rng(1);
  const std::vector<double> wb{1, 2};
  EXPECT_THROW(xbart::update_variable_weights(wb, std::vector<std::size_t>{1, 0}, std::vector<std::size_t>{0, 0}, rng),
               xbart::AccountingError);
}

TEST(VariableWeights, DominantComponentMean) {
  xbart::Rng rng(5);
  const std::vector<double> wb{1000, 1, 1};
  const std::vector<std::size_t> zero(3, 0);
  std::vector<double> xs(10000);
  for (auto& x : xs) x = xbart::update_variable_weights(wb, zero, zero, rng).second[0];
  const auto m = stats::moments(xs);
  EXPECT_LE(std::abs(m.mean - 1000.0 / 1002.0), 3 * m.se_mean());
}

TEST(Dirichlet, Moments) {
  xbart::Rng rng(6);
  const std::vector<double> a{0.5, 2.0, 7.5};
  const double a0 = 10.0;
  std::vector<std::vector<double>> comp(3, std::vector<double>(100000));
  for (std::size_t k = 0; k < 100000; ++k) {
    const auto d = rng.dirichlet(a);
    for (std::size_t i = 0; i < 3; ++i) comp[i][k] = d[i];
  }
  for (std::size_t i = 0; i < 3; ++i) {
    const auto m = stats::moments(comp[i]);
    const double mean = a[i] / a0;
    const double var = a[i] * (a0 - a[i]) / (a0 * a0 * (a0 + 1.0));
    EXPECT_LE(std::abs(m.mean - mean), 3 * m.se_mean()) << i;
    EXPECT_LE(std::abs(m.var - var), 3 * m.se_var()) << i;
  }
}

TEST(Gamma, SmallShapeMoments) {
  xbart::Rng rng(8);
  std::vector<double> xs(100000);
  for (auto& x : xs) x = rng.gamma(0.3);
  const auto m = stats::moments(xs);
  EXPECT_LE(std::abs(m.mean - 0.3), 3 * m.se_mean());
  EXPECT_LE(std::abs(m.var - 0.3), 3 * m.se_var());
}

TEST(SampleVariables, AllWhenMEqualsV) {
  xbart::Rng rng(2);
  const std::vector<double> w{0.1, 0.2, 0.3, 0.4};
  auto ids = xbart::sample_m_variables(w, 4, rng);
  std::sort(ids.begin(), ids.end());
  EXPECT_EQ(ids, (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(SampleVariables, OneHot) {
  xbart::Rng rng(2);
  const std::vector<double> w{0, 0, 1, 0};
  for (int i = 0; i < 100; ++i) EXPECT_EQ(xbart::sample_m_variables(w, 1, rng), std::vector<std::size_t>{2});
  EXPECT_THROW(xbart::sample_m_variables(w, 2, rng), xbart::ContractViolation);
  EXPECT_THROW(xbart::sample_m_variables(w, 0, rng), xbart::ContractViolation);
}

TEST(SampleVariables, SequentialFrequencies) {
  xbart::Rng rng(3);
  const std::vector<double> w{0.5, 0.3, 0.2};
  const std::size_t n = 100000;
  std::size_t first0 = 0, second1 = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto ids = xbart::sample_m_variables(w, 2, rng);
    ASSERT_EQ(ids.size(), 2u);
    ASSERT_NE(ids[0], ids[1]);
    first0 += ids[0] == 0;
    second1 += ids[1] == 1;
  }
  // P(second = 1) = 0.5 * 0.3 / 0.5 + 0.2 * 0.3 / 0.8
  const double p2 = 0.3 + 0.075;
  EXPECT_LE(std::abs(double(first0) / n - 0.5), 3 * stats::binomial_se(0.5, n));
  EXPECT_LE(std::abs(double(second1) / n - p2), 3 * stats::binomial_se(p2, n));
}

TEST(Resolve, DataDependentDefaults) {
  EXPECT_EQ(xbart::default_num_trees(10000), 35u);
  EXPECT_EQ(xbart::default_num_trees(2), 1u);
  EXPECT_EQ(xbart::default_num_cutpoints(10000), 100u);
  EXPECT_EQ(xbart::default_num_cutpoints(50000), 224u);
  EXPECT_EQ(xbart::default_num_cutpoints(50), 100u);
  const auto d = linear_data(300, 3, 1);
  const auto r = xbart::resolve(XbartConfig{}, d);
  EXPECT_EQ(r.num_trees, xbart::default_num_trees(300));
  EXPECT_DOUBLE_EQ(r.tau, 0.3 * xbart::sample_variance(d.y()) / double(r.num_trees));
  EXPECT_DOUBLE_EQ(r.sigma_prior_scale, xbart::sample_variance(d.y()));
  EXPECT_EQ(r.mtry, 3u);
  EXPECT_EQ(r.num_sweeps, 40u);
  EXPECT_EQ(r.burnin, 15u);
}

TEST(Resolve, RejectsInvalidConfigs) {
  const auto d = linear_data(50, 2, 1);
  XbartConfig c;
  c.burnin = 40;
  EXPECT_THROW(xbart::resolve(c, d), xbart::InputError);
  c = {};
  c.alpha = 1.0;
  EXPECT_THROW(xbart::resolve(c, d), xbart::InputError);
  c = {};
  c.mh = true;
  c.mtry = 1;
  EXPECT_THROW(xbart::resolve(c, d), xbart::InputError);
  c = {};
  c.mtry = 3;
  EXPECT_THROW(xbart::resolve(c, d), xbart::InputError);
  const Dataset one(Matrix(1, 1, {0.0}), {1.0});
  EXPECT_THROW(xbart::fit(one, XbartConfig{}), xbart::InputError);
  const Dataset flat(Matrix(3, 1, {0.0, 1.0, 2.0}), {1.0, 1.0, 1.0});
  EXPECT_THROW(xbart::fit(flat, XbartConfig{}), xbart::InputError);
}

TEST(Fit, SingleTreeSingleSweepIsOneGrowPass) {
  const auto d = linear_data(200, 3, 4);
  XbartConfig c;
  c.num_trees = 1;
  c.num_sweeps = 1;
  c.burnin = 0;
  c.seed = 42;
  const auto draws = xbart::fit(d, c);
  ASSERT_EQ(draws.sweeps.size(), 1u);
  ASSERT_EQ(draws.sigma2_trace.size(), 1u);

  const auto rc = xbart::resolve(c, d);
  xbart::Rng rng(42);
  xbart::GrowWorkspace<std::uint32_t> ws(d);
  const std::vector<double> w(3, 1.0 / 3.0);
  std::vector<double> fit(200);
  const auto tree = xbart::grow_tree(ws, d, d.y(), rc.grow_config(3), w, xbart::sample_variance(d.y()), rng,
                                     std::span<double>(fit));
  EXPECT_EQ(draws.sweeps[0][0], tree);
  const std::vector<double> wbar(3, 1.0);
  const std::vector<std::size_t> none(3, 0);
  xbart::update_variable_weights(wbar, none, tree.split_counts(), rng);
  std::vector<double> r(200);
  for (std::size_t i = 0; i < 200; ++i) r[i] = d.y()[i] - fit[i];
  EXPECT_EQ(draws.sigma2_trace[0], xbart::update_sigma2(r, rc.sigma_prior_shape, rc.sigma_prior_scale, rng));
}

TEST(Fit, RetainsSweepsAfterBurnin) {
  const auto d = linear_data(100, 2, 4);
  XbartConfig c;
  c.num_trees = 3;
  c.num_sweeps = 7;
  c.burnin = 4;
  const auto draws = xbart::fit(d, c);
  EXPECT_EQ(draws.sweeps.size(), 3u);
  EXPECT_EQ(draws.sigma2_trace.size(), 7u);
  for (const auto& f : draws.sweeps) EXPECT_EQ(f.size(), 3u);
}

TEST(Fit, BitDeterministic) {
  const auto d = linear_data(300, 4, 9);
  XbartConfig c;
  c.seed = 1234;
  c.mtry = 2;
  c.num_sweeps = 12;
  c.burnin = 4;
  EXPECT_EQ(xbart::fit(d, c), xbart::fit(d, c));
  XbartConfig c2 = c;
  c2.seed = 1235;
  EXPECT_NE(xbart::fit(d, c).sweeps, xbart::fit(d, c2).sweeps);
}

// Residual identity, split bookkeeping and weight normalization after every
// tree update of a full 40-sweep fit.
TEST(Fit, InvariantsAfterEveryTreeUpdate) {
  const auto d = linear_data(250, 3, 7);
  XbartConfig c;
  c.seed = 5;
  c.num_trees = 6;
  c.mtry = 2;
  std::size_t updates = 0;
  double worst_residual = 0.0;
  xbart::FitOptions opts;
  opts.on_tree_update = [&](const xbart::SamplerState& s) {
    ++updates;
    std::vector<double> split_total(3, 0.0);
    for (const auto& t : s.forest) {
      for (const auto& n : t.nodes()) {
        if (!n.is_leaf()) split_total[n.var] += 1.0;
      }
    }
    double wsum = 0.0;
    for (std::size_t v = 0; v < 3; ++v) {
      ASSERT_EQ(s.w_bar[v] - 1.0, split_total[v]) << "sweep " << s.sweep << " tree " << s.tree;
      ASSERT_GE(s.w_bar[v], 1.0);
      wsum += s.w[v];
    }
    ASSERT_NEAR(wsum, 1.0, 1e-12);
    for (std::size_t i = 0; i < d.num_rows(); ++i) {
      double f = 0.0;
      const auto row = d.x().row(i);
      for (const auto& t : s.forest) f += xbart::predict_tree(t, row);
      if (s.sweep == 1) {
        // Trees not yet regrown still carry the y / L start.
        f = 0.0;
        for (std::size_t l = 0; l < s.forest.size(); ++l) {
          f += l <= s.tree ? xbart::predict_tree(s.forest[l], row) : d.y()[i] / 6.0;
        }
      }
      worst_residual = std::max(worst_residual, std::abs(s.residual[i] - (d.y()[i] - f)) / (1 + std::abs(d.y()[i])));
    }
  };
  const auto draws = xbart::fit(d, c, opts);
  EXPECT_EQ(updates, 40u * 6u);
  EXPECT_LE(worst_residual, 1e-6);
  EXPECT_LE(draws.diagnostics.max_residual_drift, 1e-6);
}

TEST(Predict, AveragesRetainedForests) {
  xbart::PosteriorDraws draws;
  draws.num_vars = 1;
  xbart::Tree a(1), b(1);
  a.set_leaf_value(0, 1.0);
  b.set_leaf_value(0, 3.0);
  draws.sweeps = {{a}, {b}};
  const Matrix x(2, 1, {0.0, 5.0});
  EXPECT_EQ(xbart::predict(draws, x), (std::vector<double>{2.0, 2.0}));
  draws.sweeps = {{a, b}};
  EXPECT_EQ(xbart::predict(draws, x), (std::vector<double>{4.0, 4.0}));
  EXPECT_THROW(xbart::predict(draws, Matrix(2, 2)), xbart::InputError);
}

TEST(Predict, SingleRetainedSweepIsForestSum) {
  const auto d = linear_data(150, 2, 3);
  XbartConfig c;
  c.num_trees = 4;
  c.num_sweeps = 5;
  c.burnin = 4;
  const auto draws = xbart::fit(d, c);
  const auto pred = xbart::predict(draws, d.x());
  for (std::size_t i = 0; i < d.num_rows(); ++i) {
    double f = 0.0;
    for (const auto& t : draws.sweeps[0]) f += xbart::predict_tree(t, d.x(), i);
    EXPECT_EQ(pred[i], f);
  }
}

TEST(Fit, LinearSignalBeatsSpreadOfResponse) {
  for (unsigned rep = 0; rep < 5; ++rep) {
    Matrix test;
    const auto d = linear_data(2000, 5, 100 + rep, &test);
    XbartConfig c;
    c.seed = rep;
    const auto pred = xbart::predict(xbart::fit(d, c), test);
    std::vector<double> truth(test.rows());
    for (std::size_t i = 0; i < test.rows(); ++i) truth[i] = 2.0 * test(i, 0);
    EXPECT_LT(xbart::rmse(pred, truth), 0.6 * std::sqrt(xbart::sample_variance(d.y()))) << "rep " << rep;
  }
}

TEST(Fit, BeatsTrainingMeanOnEveryProcess) {
  for (auto dgp : {xbart::Dgp::linear, xbart::Dgp::single_index, xbart::Dgp::trig_poly, xbart::Dgp::max}) {
    for (std::uint64_t rep = 0; rep < 5; ++rep) {
      xbart::DgpSpec spec{dgp, 2000, 30, 1.0, 500 + rep};
      const auto s = xbart::gen_dgp(spec);
      XbartConfig c;
      c.seed = rep;
      const auto pred = xbart::predict(xbart::fit(s.train, c), s.test_x);
      const std::vector<double> null_pred(s.test_f.size(), xbart::mean(s.train.y()));
      EXPECT_LT(xbart::rmse(pred, s.test_f), xbart::rmse(null_pred, s.test_f))
          << xbart::to_string(dgp) << " rep " << rep;
    }
  }
}

TEST(Fit, Sigma2TraceNearTruthOnLinear) {
  const auto s = xbart::gen_dgp(xbart::DgpSpec{xbart::Dgp::linear, 10000, 30, 1.0, 77});
  XbartConfig c;
  c.seed = 3;
  const auto draws = xbart::fit(s.train, c);
  double m = 0.0;
  for (std::size_t k = draws.config.burnin; k < draws.sigma2_trace.size(); ++k) m += draws.sigma2_trace[k];
  m /= double(draws.sigma2_trace.size() - draws.config.burnin);
  const double truth = s.sigma_true * s.sigma_true;
  EXPECT_NEAR(m, truth, 0.25 * truth) << "posterior sigma2 mean " << m << ", true " << truth;
}

}  // namespace
