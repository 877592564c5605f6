#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "xbart/config.hpp"
#include "xbart/dataset.hpp"
#include "xbart/grower.hpp"
#include "xbart/random.hpp"
#include "xbart/tree.hpp"

namespace xbart {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double normal_logpdf(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + d * d / variance);
}

/// Log probability that grow-from-root produces a given tree. `structure`
/// covers the split / no-split decisions, `leaf` the leaf-mean densities.
/// An unreachable tree has structure == -inf and a reason.
struct GrowProbability {
  double structure = 0.0;
  double leaf = 0.0;
  std::string reason;

  double log_density() const noexcept { return structure + leaf; }
  bool reachable() const noexcept { return structure > kNegInf; }
};

namespace detail {

// Replays an existing tree through the grower's recursion, accumulating the
// log probability of each decision instead of sampling it.
template <RowIndex Index>
class DensityPolicy {
 public:
  using Handle = std::size_t;
  static constexpr bool kUsesCriterion = true;

  DensityPolicy(const Tree& tree, double sigma2, double tau) : tree_(tree), sigma2_(sigma2), tau_(tau) {}

  bool aborted() const noexcept { return !out_.reason.empty(); }
  GrowProbability result() const { return out_; }

  void select_variables(std::size_t, std::vector<std::size_t>&) {
    throw ContractViolation("proposal density is only defined when every variable is considered");
  }

  CutChoice decide(Handle h, const NodeView<Index>& node, const CutCandidateTable& table) {
    const auto& tn = tree_.node(h);
    if (tn.is_leaf()) {
      out_.structure += table.log_probability(0);
      return CutChoice{};
    }
    const std::size_t rank = node.count_at_or_below(tn.var, tn.cut);
    const std::size_t entry = table.find(tn.var, rank);
    if (entry == table.size()) {
      fail("split on variable " + std::to_string(tn.var) + " at rank " + std::to_string(rank) +
           " is not a candidate of its node");
      return CutChoice{};
    }
    out_.structure += table.log_probability(entry);
    return CutChoice{entry, tn.var, rank};
  }

  void leaf(Handle h, const NodeView<Index>& node, bool) {
    const auto& tn = tree_.node(h);
    if (!tn.is_leaf()) {
      fail("tree splits a node where growth is forced to stop");
      return;
    }
    const auto post = leaf_posterior(node.whole, sigma2_, tau_);
    out_.leaf += normal_logpdf(tn.mu, post.mean, post.variance);
  }

  std::pair<Handle, Handle> split(Handle h, const NodeView<Index>&, std::size_t, double, std::size_t) {
    const auto& tn = tree_.node(h);
    return {static_cast<Handle>(tn.left), static_cast<Handle>(tn.right)};
  }

 private:
  void fail(std::string why) {
    out_.structure = kNegInf;
    out_.reason = std::move(why);
  }

  const Tree& tree_;
  double sigma2_;
  double tau_;
  GrowProbability out_;
};

// Tree prior on the same candidate machinery: a node at depth d splits with
// probability alpha (1+d)^-beta, choosing uniformly among the node's
// (variable, rank) candidates that separate their rows; a node without any
// is a leaf with probability one. Leaf means are N(0, tau).
template <RowIndex Index>
class PriorPolicy {
 public:
  using Handle = std::size_t;
  static constexpr bool kUsesCriterion = false;

  PriorPolicy(const Tree& tree, const GrowConfig& config, std::size_t num_vars)
      : tree_(tree), config_(config), num_vars_(num_vars) {}

  bool aborted() const noexcept { return !reason_.empty(); }
  double log_prior() const noexcept { return logp_; }
  const std::string& reason() const noexcept { return reason_; }

  void select_variables(std::size_t, std::vector<std::size_t>&) {
    throw ContractViolation("tree prior is only defined when every variable is considered");
  }

  CutChoice decide(Handle h, const NodeView<Index>& node, const CutCandidateTable&) {
    const auto& tn = tree_.node(h);
    const double p = split_prior(config_.alpha, config_.beta, node.depth);
    std::size_t candidates = 0;
    for (std::size_t v = 0; v < num_vars_; ++v) {
      for (const std::size_t r : node.ranks) candidates += node.separates(v, r) ? 1 : 0;
    }
    if (tn.is_leaf()) {
      if (candidates > 0) logp_ += std::log1p(-p);
      return CutChoice{};
    }
    const std::size_t rank = node.count_at_or_below(tn.var, tn.cut);
    if (!std::binary_search(node.ranks.begin(), node.ranks.end(), rank) || !node.separates(tn.var, rank)) {
      logp_ = kNegInf;
      reason_ = "split outside the candidate set";
      return CutChoice{};
    }
    logp_ += std::log(p) - std::log(static_cast<double>(candidates));
    return CutChoice{1, tn.var, rank};
  }

  void leaf(Handle h, const NodeView<Index>&, bool) {
    const auto& tn = tree_.node(h);
    if (!tn.is_leaf()) {
      logp_ = kNegInf;
      reason_ = "tree splits a node where growth is forced to stop";
      return;
    }
    logp_ += normal_logpdf(tn.mu, 0.0, config_.tau);
  }

  std::pair<Handle, Handle> split(Handle h, const NodeView<Index>&, std::size_t, double, std::size_t) {
    const auto& tn = tree_.node(h);
    return {static_cast<Handle>(tn.left), static_cast<Handle>(tn.right)};
  }

 private:
  const Tree& tree_;
  const GrowConfig& config_;
  std::size_t num_vars_;
  double logp_ = 0.0;
  std::string reason_;
};

inline void require_full_variable_set(const GrowConfig& config, std::size_t num_vars) {
  if (config.mtry != num_vars) {
    throw ContractViolation("tree densities require mtry equal to the number of predictors");
  }
}

}  // namespace detail

template <RowIndex Index>
GrowProbability grow_prob(const Tree& tree, std::span<const double> residual, GrowWorkspace<Index>& ws,
                          const Dataset& data, const GrowConfig& config, double sigma2) {
  detail::require_full_variable_set(config, data.num_vars());
  ws.reset();
  detail::DensityPolicy<Index> policy(tree, sigma2, config.tau);
  NodeWalker<Index, detail::DensityPolicy<Index>> walker(data, residual, config, sigma2, ws, policy);
  walker.walk(0, ws.index().node_size(), tree.node(Tree::root()).depth, Tree::root());
  return policy.result();
}

template <RowIndex Index>
GrowProbability grow_prob(const Tree& tree, std::span<const double> residual,
                          const PresortedIndex<Index>& idx, const Dataset& data,
                          const GrowConfig& config, double sigma2) {
  GrowWorkspace<Index> ws(data, idx);
  return grow_prob(tree, residual, ws, data, config, sigma2);
}

template <RowIndex Index>
double tree_log_prior(const Tree& tree, GrowWorkspace<Index>& ws, const Dataset& data,
                      const GrowConfig& config) {
  detail::require_full_variable_set(config, data.num_vars());
  ws.reset();
  detail::PriorPolicy<Index> policy(tree, config, data.num_vars());
  const std::vector<double> unused(data.num_rows(), 0.0);
  NodeWalker<Index, detail::PriorPolicy<Index>> walker(data, unused, config, 1.0, ws, policy);
  walker.walk(0, ws.index().node_size(), tree.node(Tree::root()).depth, Tree::root());
  return policy.log_prior();
}

/// A full set of trees with the variance parameters they were grown under.
struct ForestSnapshot {
  std::vector<Tree> trees;
  double sigma2 = 1.0;
  double tau = 1.0;

  friend bool operator==(const ForestSnapshot&, const ForestSnapshot&) = default;
};

struct LogDensity {
  double value = 0.0;
  std::string reason;

  bool is_zero_probability() const noexcept { return value == kNegInf; }
};

namespace detail {

inline GrowConfig density_config(const ResolvedConfig& config, std::size_t num_vars, double tau) {
  GrowConfig g = config.grow_config(num_vars);
  g.tau = tau;
  return g;
}

inline std::vector<std::vector<double>> forest_fits(const ForestSnapshot& f, const Matrix& x) {
  std::vector<std::vector<double>> fits;
  fits.reserve(f.trees.size());
  for (const auto& t : f.trees) fits.push_back(tree_fit(t, x));
  return fits;
}

}  // namespace detail

/// log q(proposed | current): regrow each proposed tree in turn against the
/// residual left by the current forest's later trees and the proposed
/// forest's earlier trees.
template <RowIndex Index = std::uint32_t>
LogDensity proposal_density(const ForestSnapshot& current, const ForestSnapshot& proposed,
                            const Dataset& data, const ResolvedConfig& config,
                            GrowWorkspace<Index>& ws) {
  const std::size_t num_trees = current.trees.size();
  if (proposed.trees.size() != num_trees || num_trees == 0) {
    throw ContractViolation("forest snapshots must hold the same nonzero number of trees");
  }
  const std::size_t n = data.num_rows();
  const auto gcfg = detail::density_config(config, data.num_vars(), current.tau);
  const auto cur = detail::forest_fits(current, data.x());
  const auto prop = detail::forest_fits(proposed, data.x());
  const auto y = data.y();

  std::vector<double> r(n);
  LogDensity q;
  for (std::size_t l = 0; l < num_trees; ++l) {
    for (std::size_t i = 0; i < n; ++i) {
      double f = 0.0;
      for (std::size_t j = 0; j < l; ++j) f += prop[j][i];
      for (std::size_t j = l + 1; j < num_trees; ++j) f += cur[j][i];
      r[i] = y[i] - f;
    }
    const auto gp = grow_prob(proposed.trees[l], r, ws, data, gcfg, current.sigma2);
    if (!gp.reachable()) {
      q.value = kNegInf;
      q.reason = "tree " + std::to_string(l) + ": " + gp.reason;
      return q;
    }
    q.value += gp.log_density();
  }
  return q;
}

template <RowIndex Index = std::uint32_t>
LogDensity proposal_density(const ForestSnapshot& current, const ForestSnapshot& proposed,
                            const Dataset& data, const ResolvedConfig& config) {
  GrowWorkspace<Index> ws(data);
  return proposal_density(current, proposed, data, config, ws);
}

/// Unnormalized log posterior: Gaussian likelihood at the forest's fitted
/// values plus the tree priors.
template <RowIndex Index = std::uint32_t>
double forest_log_target(const ForestSnapshot& f, const Dataset& data, const ResolvedConfig& config,
                         GrowWorkspace<Index>& ws) {
  const auto gcfg = detail::density_config(config, data.num_vars(), f.tau);
  double logp = 0.0;
  for (const auto& t : f.trees) {
    logp += tree_log_prior(t, ws, data, gcfg);
    if (logp == kNegInf) return logp;
  }
  const auto fits = detail::forest_fits(f, data.x());
  const auto y = data.y();
  for (std::size_t i = 0; i < data.num_rows(); ++i) {
    double fi = 0.0;
    for (const auto& fit : fits) fi += fit[i];
    logp += normal_logpdf(y[i], fi, f.sigma2);
  }
  return logp;
}

struct MhDecision {
  ForestSnapshot forest;
  bool accepted = false;
  double log_ratio = 0.0;
  double acceptance_probability = 0.0;
  std::string diagnostic;
};

/// One Metropolis-Hastings accept/reject between whole forests. sigma2 and
/// tau are taken from `current` and held fixed for the decision.
template <RowIndex Index = std::uint32_t>
MhDecision mh_sweep_accept(const ForestSnapshot& current, const ForestSnapshot& proposed,
                           const Dataset& data, const ResolvedConfig& config, Rng& rng,
                           GrowWorkspace<Index>& ws) {
  ForestSnapshot prop = proposed;
  prop.sigma2 = current.sigma2;
  prop.tau = current.tau;

  const LogDensity forward = proposal_density(current, prop, data, config, ws);
  const LogDensity reverse = proposal_density(prop, current, data, config, ws);
  const double target_cur = forest_log_target(current, data, config, ws);
  const double target_prop = forest_log_target(prop, data, config, ws);
  const double u = rng.uniform_pos();

  MhDecision d;
  if (forward.is_zero_probability() || reverse.is_zero_probability() || target_prop == kNegInf) {
    d.forest = current;
    d.log_ratio = kNegInf;
    d.diagnostic = forward.is_zero_probability() ? "forward proposal density is zero: " + forward.reason
                   : reverse.is_zero_probability() ? "reverse proposal density is zero: " + reverse.reason
                                                   : "proposed forest has zero prior probability";
    return d;
  }
  d.log_ratio = (target_prop + reverse.value) - (target_cur + forward.value);
  d.acceptance_probability = d.log_ratio >= 0.0 ? 1.0 : std::exp(d.log_ratio);
  d.accepted = std::log(u) < d.log_ratio || d.log_ratio >= 0.0;
  d.forest = d.accepted ? prop : current;
  return d;
}

template <RowIndex Index = std::uint32_t>
MhDecision mh_sweep_accept(const ForestSnapshot& current, const ForestSnapshot& proposed,
                           const Dataset& data, const ResolvedConfig& config, Rng& rng) {
  GrowWorkspace<Index> ws(data);
  return mh_sweep_accept(current, proposed, data, config, rng, ws);
}

}  // namespace xbart
