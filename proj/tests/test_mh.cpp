#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "oracles.hpp"
#include "stats.hpp"
#include "tiny.hpp"
#include "xbart/mh.hpp"
#include "xbart/sampler.hpp"

namespace {

using xbart::ForestSnapshot;
using xbart::Tree;

// Tree from decisions, with leaf means drawn at random.
Tree tree_with_means(const oracle::Tiny& t, const oracle::Decisions& d, std::mt19937_64& gen) {
  Tree tree = oracle::evaluate(t, d, tiny::response()).tree;
  std::normal_distribution<double> nd;
  for (std::size_t i = 0; i < tree.size(); ++i) {
    if (tree.is_leaf(i)) tree.set_leaf_value(i, nd(gen));
  }
  return tree;
}

TEST(GrowProb, EnumerationHasEightStructures) { EXPECT_EQ(oracle::enumerate(tiny::problem()).size(), 8u); }

TEST(GrowProb, StructureMatchesOracleAndNormalizes) {
  const auto t = tiny::problem();
  const auto d = tiny::dataset();
  const auto idx = xbart::presort(d);
  double total = 0.0;
  for (const auto& dec : oracle::enumerate(t)) {
    const auto ev = oracle::evaluate(t, dec, tiny::response());
    const auto gp = xbart::grow_prob(ev.tree, d.y(), idx, d, tiny::grow_config(), t.sigma2);
    ASSERT_TRUE(gp.reachable()) << gp.reason;
    EXPECT_NEAR(gp.structure, ev.log_grow, 1e-12) << oracle::key(ev.tree);
    total += std::exp(gp.structure);
  }
  EXPECT_NEAR(total, 1.0, 1e-10);
}

TEST(GrowProb, FullDensityMatchesOracle) {
  const auto t = tiny::problem();
  const auto d = tiny::dataset();
  const auto idx = xbart::presort(d);
  std::mt19937_64 gen(4);
  const std::vector<double> r{1.5, -0.2, 0.7, 2.4};
  for (const auto& dec : oracle::enumerate(t)) {
    const Tree tree = tree_with_means(t, dec, gen);
    const auto gp = xbart::grow_prob(tree, r, idx, d, tiny::grow_config(), t.sigma2);
    EXPECT_NEAR(gp.log_density(), oracle::grow_log_density(t, tree, r), 1e-10);
  }
}

TEST(GrowProb, SingleLeafIsNosplitPlusLeafDensity) {
  const auto t = tiny::problem();
  const auto d = tiny::dataset();
  Tree leaf(1);
  leaf.set_leaf_value(0, 0.37);
  const auto gp = xbart::grow_prob(leaf, d.y(), xbart::presort(d), d, tiny::grow_config(), t.sigma2);
  xbart::CutCandidateTable table;
  const xbart::CriterionParams p{t.sigma2, t.tau, t.alpha, t.beta, 0};
  const xbart::SuffStats whole{4, 0.4 + 1.3 - 0.8 + 1.9};
  table.reset(xbart::nosplit_loglik(whole, p), xbart::nosplit_weight(p, 1));
  // Candidates at ranks 1 and 2 of x order (-0.4, 0.3, 1.1, 2.0).
  table.add(0, 1, xbart::split_loglik({1, -0.8}, {3, 0.4 + 1.3 + 1.9}, p));
  table.add(0, 2, xbart::split_loglik({2, -0.4}, {2, 3.2}, p));
  const auto post = xbart::leaf_posterior(whole, t.sigma2, t.tau);
  EXPECT_NEAR(gp.structure, table.log_probability(0), 1e-14);
  EXPECT_NEAR(gp.leaf, xbart::normal_logpdf(0.37, post.mean, post.variance), 1e-14);
}

TEST(GrowProb, LeafDensityIntegratesToOne) {
  const auto post = xbart::leaf_posterior({3, 2.2}, 0.8, 1.7);
  double total = 0.0;
  const double h = 1e-3;
  for (double mu = post.mean - 12.0; mu <= post.mean + 12.0; mu += h) {
    total += std::exp(xbart::normal_logpdf(mu, post.mean, post.variance)) * h;
  }
  EXPECT_NEAR(total, 1.0, 1e-8);
}

TEST(GrowProb, UnreachableSplitIsZeroProbability) {
  const auto d = tiny::dataset();
  Tree t(1);
  t.split(0, 0, 1.1);  // three rows at or below: rank 3 is not a candidate
  const auto gp = xbart::grow_prob(t, d.y(), xbart::presort(d), d, tiny::grow_config(), 1.0);
  EXPECT_FALSE(gp.reachable());
  EXPECT_EQ(gp.log_density(), -INFINITY);
  EXPECT_FALSE(gp.reason.empty());
}

TEST(GrowProb, SplitBelowMaxDepthIsZeroProbability) {
  const auto d = tiny::dataset();
  Tree t(1);
  const auto [l, r] = t.split(0, 0, 0.3);
  const auto [rl, rr] = t.split(r, 0, 1.1);
  t.split(rr, 0, 2.0);  // would be depth 2 -> 3; also a single-row node
  (void)l;
  (void)rl;
  const auto gp = xbart::grow_prob(t, d.y(), xbart::presort(d), d, tiny::grow_config(), 1.0);
  EXPECT_FALSE(gp.reachable());
}

TEST(GrowProb, RequiresFullVariableSet) {
  const xbart::Dataset d(xbart::Matrix(4, 2, {1, 2, 3, 4, 4, 3, 2, 1}), {1, 2, 3, 4});
  auto g = tiny::grow_config();
  g.mtry = 1;
  EXPECT_THROW(xbart::grow_prob(Tree(2), d.y(), xbart::presort(d), d, g, 1.0), xbart::ContractViolation);
}

TEST(GrowProb, SamplerFrequenciesMatchDensity) {
  const auto t = tiny::problem();
  const auto d = tiny::dataset();
  const auto idx = xbart::presort(d);
  std::map<std::string, double> prob;
  for (const auto& dec : oracle::enumerate(t)) {
    const auto ev = oracle::evaluate(t, dec, tiny::response());
    prob[oracle::key(ev.tree)] = std::exp(xbart::grow_prob(ev.tree, d.y(), idx, d, tiny::grow_config(), t.sigma2).structure);
  }
  xbart::GrowWorkspace<std::uint32_t> ws(d);
  xbart::Rng rng(2718);
  const std::size_t n = 100000;
  std::map<std::string, std::size_t> count;
  const std::vector<double> w{1.0};
  for (std::size_t i = 0; i < n; ++i) ++count[oracle::key(xbart::grow_tree(ws, d, d.y(), tiny::grow_config(), w, t.sigma2, rng))];
  for (const auto& [k, c] : count) ASSERT_TRUE(prob.count(k)) << "unexpected structure " << k;
  for (const auto& [k, p] : prob) {
    EXPECT_LE(std::abs(double(count[k]) / n - p), 3 * stats::binomial_se(p, n)) << k;
  }
}

TEST(TreePrior, MatchesOracle) {
  const auto t = tiny::problem();
  const auto d = tiny::dataset();
  xbart::GrowWorkspace<std::uint32_t> ws(d);
  std::mt19937_64 gen(6);
  for (const auto& dec : oracle::enumerate(t)) {
    const Tree tree = tree_with_means(t, dec, gen);
    double expect = oracle::evaluate(t, dec, tiny::response()).log_prior;
    for (const auto& n : tree.nodes()) {
      if (n.is_leaf()) expect += oracle::log_normal(n.mu, 0.0, t.tau);
    }
    EXPECT_NEAR(xbart::tree_log_prior(tree, ws, d, tiny::grow_config()), expect, 1e-12);
  }
}

TEST(ProposalDensity, OneTreeEqualsGrowProb) {
  const auto d = tiny::dataset();
  std::mt19937_64 gen(9);
  const auto decs = oracle::enumerate(tiny::problem());
  const Tree a = tree_with_means(tiny::problem(), decs[3], gen);
  const Tree b = tree_with_means(tiny::problem(), decs[6], gen);
  const ForestSnapshot cur{{a}, 1.0, 1.0}, prop{{b}, 1.0, 1.0};
  const auto q = xbart::proposal_density(cur, prop, d, tiny::resolved_config());
  const auto gp = xbart::grow_prob(b, d.y(), xbart::presort(d), d, tiny::grow_config(), 1.0);
  EXPECT_NEAR(q.value, gp.log_density(), 1e-14);
}

TEST(ProposalDensity, TwoTreesMatchStraightLineOracle) {
  const auto t = tiny::problem();
  const auto d = tiny::dataset();
  const auto y = tiny::response();
  std::mt19937_64 gen(12);
  const auto decs = oracle::enumerate(t);
  for (int trial = 0; trial < 20; ++trial) {
    const Tree c0 = tree_with_means(t, decs[gen() % 8], gen), c1 = tree_with_means(t, decs[gen() % 8], gen);
    const Tree p0 = tree_with_means(t, decs[gen() % 8], gen), p1 = tree_with_means(t, decs[gen() % 8], gen);
    const ForestSnapshot cur{{c0, c1}, 1.0, 1.0}, prop{{p0, p1}, 1.0, 1.0};
    std::vector<double> r(4);
    for (std::size_t i = 0; i < 4; ++i) r[i] = y[i] - xbart::predict_tree(c1, d.x(), i);
    double expect = oracle::grow_log_density(t, p0, r);
    for (std::size_t i = 0; i < 4; ++i) r[i] = y[i] - xbart::predict_tree(p0, d.x(), i);
    expect += oracle::grow_log_density(t, p1, r);
    const auto q = xbart::proposal_density(cur, prop, d, tiny::resolved_config(2));
    EXPECT_NEAR(q.value, expect, 1e-10);
    const auto back = xbart::proposal_density(prop, cur, d, tiny::resolved_config(2));
    EXPECT_TRUE(std::isfinite(back.value));
  }
}

TEST(ProposalDensity, GenerallyAsymmetric) {
  const auto d = tiny::dataset();
  std::mt19937_64 gen(1);
  const auto decs = oracle::enumerate(tiny::problem());
  const ForestSnapshot a{{tree_with_means(tiny::problem(), decs[0], gen), tree_with_means(tiny::problem(), decs[4], gen)}, 1.0, 1.0};
  const ForestSnapshot b{{tree_with_means(tiny::problem(), decs[7], gen), tree_with_means(tiny::problem(), decs[2], gen)}, 1.0, 1.0};
  const auto cfg = tiny::resolved_config(2);
  EXPECT_NE(xbart::proposal_density(a, b, d, cfg).value, xbart::proposal_density(b, a, d, cfg).value);
}

TEST(MhAccept, IdenticalProposalAlwaysAccepted) {
  const auto d = tiny::dataset();
  std::mt19937_64 gen(2);
  const auto decs = oracle::enumerate(tiny::problem());
  xbart::Rng rng(3);
  for (const auto& dec : decs) {
    const ForestSnapshot f{{tree_with_means(tiny::problem(), dec, gen)}, 1.0, 1.0};
    const auto step = xbart::mh_sweep_accept(f, f, d, tiny::resolved_config(), rng);
    EXPECT_TRUE(step.accepted);
    EXPECT_NEAR(step.log_ratio, 0.0, 1e-12);
    EXPECT_EQ(step.acceptance_probability, 1.0);
  }
}

TEST(MhAccept, ProbabilityWithinUnitInterval) {
  const auto d = tiny::dataset();
  std::mt19937_64 gen(5);
  const auto decs = oracle::enumerate(tiny::problem());
  xbart::Rng rng(6);
  for (int k = 0; k < 200; ++k) {
    const ForestSnapshot a{{tree_with_means(tiny::problem(), decs[gen() % 8], gen)}, 1.0, 1.0};
    const ForestSnapshot b{{tree_with_means(tiny::problem(), decs[gen() % 8], gen)}, 1.0, 1.0};
    const auto step = xbart::mh_sweep_accept(a, b, d, tiny::resolved_config(), rng);
    EXPECT_GE(step.acceptance_probability, 0.0);
    EXPECT_LE(step.acceptance_probability, 1.0);
    EXPECT_EQ(step.forest, step.accepted ? b : a);
  }
}

TEST(MhAccept, UnreachableProposalRejectedWithDiagnostic) {
  const auto d = tiny::dataset();
  Tree bad(1);
  bad.split(0, 0, 1.1);
  Tree ok(1);
  const ForestSnapshot cur{{ok}, 1.0, 1.0}, prop{{bad}, 1.0, 1.0};
  xbart::Rng rng(1);
  const auto step = xbart::mh_sweep_accept(cur, prop, d, tiny::resolved_config(), rng);
  EXPECT_FALSE(step.accepted);
  EXPECT_EQ(step.forest, cur);
  EXPECT_FALSE(step.diagnostic.empty());
}

TEST(MhChain, StationaryStructureFrequencies) {
  const auto posterior = oracle::structure_posterior(tiny::problem(), tiny::response());
  double total = 0.0;
  for (const auto& [k, p] : posterior) total += p;
  ASSERT_NEAR(total, 1.0, 1e-12);
  const auto chain = tiny::run_chain(100000, 31337);
  EXPECT_GT(chain.accepted, 0u);
  for (const auto& [k, p] : posterior) {
    const auto& ind = chain.indicator.at(k);
    const auto m = stats::moments(ind);
    EXPECT_LE(std::abs(m.mean - p), 3 * stats::batch_means_se(ind, 100)) << k << " target " << p;
  }
}

TEST(MhFit, EndToEndRunsAndCounts) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd;
  xbart::Matrix x(120, 2);
  std::vector<double> y(120);
  for (std::size_t i = 0; i < 120; ++i) {
    x(i, 0) = nd(gen);
    x(i, 1) = nd(gen);
    y[i] = (x(i, 0) > 0 ? 2.0 : -1.0) + 0.3 * nd(gen);
  }
  const xbart::Dataset d(std::move(x), std::move(y));
  xbart::XbartConfig c;
  c.mh = true;
  c.num_trees = 3;
  c.num_sweeps = 10;
  c.burnin = 3;
  const auto draws = xbart::fit(d, c);
  EXPECT_EQ(draws.diagnostics.mh_proposals, 9u);
  EXPECT_LE(draws.diagnostics.mh_accepted, 9u);
  EXPECT_EQ(draws.sweeps.size(), 7u);
  EXPECT_EQ(xbart::fit(d, c), draws);
}

// Tied predictor: the root has one separating rank and the children have
// none, so they are leaves with probability one under both densities.
TEST(TreePrior, TiedChildrenAreCertainLeaves) {
  const xbart::Dataset d(xbart::Matrix(6, 1, {1.0, 0.0, 1.0, 0.0, 0.0, 1.0}),
                         std::vector<double>{2.0, -1.0, 2.5, -0.5, -1.2, 1.8});
  const xbart::GrowConfig g{100, 1, 0.8, 0.95, 1.25, 40, 1.0};
  Tree t(1);
  const auto [l, r] = t.split(0, 0, 0.0);
  t.set_leaf_value(l, -0.7);
  t.set_leaf_value(r, 1.9);
  xbart::GrowWorkspace<std::uint32_t> ws(d);
  const double expected = std::log(0.95) + xbart::normal_logpdf(-0.7, 0.0, 0.8) + xbart::normal_logpdf(1.9, 0.0, 0.8);
  EXPECT_NEAR(xbart::tree_log_prior(t, ws, d, g), expected, 1e-12);

  const auto gp = xbart::grow_prob(t, d.y(), ws, d, g, 1.0);
  ASSERT_TRUE(gp.reachable()) << gp.reason;
  // Only the root decision carries probability: split versus no-split.
  const xbart::CriterionParams p{1.0, 0.8, 0.95, 1.25, 0};
  const double split = xbart::split_loglik({3, -2.7}, {3, 6.3}, p);
  const double stay = xbart::nosplit_loglik({6, 3.6}, p) + std::log(xbart::nosplit_weight(p, 1));
  EXPECT_NEAR(gp.structure, split - std::log(std::exp(split) + std::exp(stay)), 1e-12);

  Tree bad(1);
  const auto [bl, br] = bad.split(0, 0, 0.0);
  bad.split(bl, 0, 0.0);
  EXPECT_EQ(xbart::tree_log_prior(bad, ws, d, g), -std::numeric_limits<double>::infinity());
  (void)br;
}

}  // namespace
