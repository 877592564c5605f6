#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "xbart/criterion.hpp"
#include "xbart/dataset.hpp"
#include "xbart/error.hpp"
#include "xbart/presort.hpp"
#include "xbart/random.hpp"
#include "xbart/tree.hpp"

namespace xbart {

struct GrowConfig {
  std::size_t num_cutpoints = 100;
  std::size_t mtry = 1;
  double tau = 1.0;
  double alpha = 0.95;
  double beta = 1.25;
  int max_depth = 40;
  double null_weight_multiplier = 1.0;

  void validate(std::size_t num_vars) const {
    if (num_cutpoints < 1) throw InputError("number of cut-points must be at least 1");
    if (mtry < 1 || mtry > num_vars) throw InputError("mtry must lie in [1, number of predictors]");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw InputError("tau must be positive and finite");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw InputError("alpha must lie in (0, 1]");
    if (!(beta >= 0.0)) throw InputError("beta must be nonnegative");
    if (max_depth < 0) throw InputError("max_depth must be nonnegative");
    if (!(null_weight_multiplier >= 0.0)) throw InputError("null weight multiplier must be nonnegative");
  }
};

/// Candidate split ranks for a node of `node_size` rows: every j-th sorted
/// position with j = floor((n_b - 2) / C), at most C of them, each leaving
/// both children nonempty. When j == 0 every interior rank is a candidate.
inline void select_cutpoint_ranks(std::size_t node_size, std::size_t num_cutpoints,
                                  std::vector<std::size_t>& out) {
  out.clear();
  if (node_size < 2) return;
  const std::size_t stride = num_cutpoints == 0 ? 0 : (node_size - 2) / num_cutpoints;
  if (stride == 0) {
    for (std::size_t c = 1; c < node_size; ++c) out.push_back(c);
    return;
  }
  for (std::size_t c = stride; c < node_size && out.size() < num_cutpoints; c += stride) {
    out.push_back(c);
  }
}

inline std::vector<std::size_t> select_cutpoint_ranks(std::size_t node_size,
                                                      std::size_t num_cutpoints) {
  std::vector<std::size_t> out;
  select_cutpoint_ranks(node_size, num_cutpoints, out);
  return out;
}

/// Conjugate posterior of a leaf mean under a N(0, tau) prior.
struct LeafPosterior {
  double mean = 0.0;
  double variance = 0.0;
};

inline LeafPosterior leaf_posterior(const SuffStats& stats, double sigma2, double tau) {
  if (!(tau > 0.0) || !(sigma2 > 0.0)) throw ContractViolation("leaf posterior needs tau > 0 and sigma2 > 0");
  const double precision = 1.0 / tau + static_cast<double>(stats.count) / sigma2;
  return {stats.sum / (sigma2 * precision), 1.0 / precision};
}

inline double sample_leaf_mu(const SuffStats& stats, double sigma2, double tau, Rng& rng) {
  const auto post = leaf_posterior(stats, sigma2, tau);
  return rng.normal(post.mean, std::sqrt(post.variance));
}

/// Draws m distinct variable ids sequentially without replacement, each
/// draw proportional to `w` over the ids not yet taken.
inline void sample_m_variables(std::span<const double> w, std::size_t m, Rng& rng,
                               std::vector<std::size_t>& out) {
  const std::size_t num_vars = w.size();
  if (m < 1 || m > num_vars) throw ContractViolation("m must lie in [1, V]");
  std::size_t positive = 0;
  for (double x : w) {
    if (x < 0.0 || !std::isfinite(x)) throw ContractViolation("variable weights must be finite and nonnegative");
    positive += x > 0.0 ? 1 : 0;
  }
  if (positive < m) throw ContractViolation("fewer than m variables have positive weight");

  out.clear();
  std::vector<std::uint8_t> taken(num_vars, 0);
  for (std::size_t draw = 0; draw < m; ++draw) {
    double total = 0.0;
    for (std::size_t v = 0; v < num_vars; ++v) total += taken[v] ? 0.0 : w[v];
    const double target = rng.uniform() * total;
    double running = 0.0;
    std::size_t pick = num_vars;
    std::size_t last_positive = num_vars;
    for (std::size_t v = 0; v < num_vars; ++v) {
      if (taken[v] || w[v] <= 0.0) continue;
      last_positive = v;
      running += w[v];
      if (target < running) {
        pick = v;
        break;
      }
    }
    if (pick == num_vars) pick = last_positive;
    taken[pick] = 1;
    out.push_back(pick);
  }
}

inline std::vector<std::size_t> sample_m_variables(std::span<const double> w, std::size_t m,
                                                   Rng& rng) {
  std::vector<std::size_t> out;
  sample_m_variables(w, m, rng, out);
  return out;
}

/// Scratch state for growing trees over one dataset. The working index is
/// partitioned in place as the recursion descends; reset() restores the
/// root ordering before each new tree.
template <RowIndex Index = std::uint32_t>
class GrowWorkspace {
 public:
  GrowWorkspace(const Dataset& data, PresortedIndex<Index> root)
      : root_(std::move(root)),
        work_(root_),
        goes_left_(data.num_rows(), 0),
        scratch_(root_.node_size()) {}

  explicit GrowWorkspace(const Dataset& data) : GrowWorkspace(data, presort<Index>(data)) {}

  void reset() { work_ = root_; }

  const PresortedIndex<Index>& root() const noexcept { return root_; }
  PresortedIndex<Index>& index() noexcept { return work_; }
  const PresortedIndex<Index>& index() const noexcept { return work_; }
  std::span<std::uint8_t> goes_left() noexcept { return goes_left_; }
  std::span<Index> scratch() noexcept { return scratch_; }

  // Reused per node; contents are only valid inside one visit.
  std::vector<std::size_t> ranks;
  std::vector<std::size_t> vars;
  CutCandidateTable table;
  // Per-rank criterion terms that depend only on child counts.
  std::vector<double> rank_const;
  std::vector<double> left_quad;
  std::vector<double> right_quad;

 private:
  PresortedIndex<Index> root_;
  PresortedIndex<Index> work_;
  std::vector<std::uint8_t> goes_left_;
  std::vector<Index> scratch_;
};

/// What a policy sees at each node.
template <RowIndex Index>
struct NodeView {
  const Dataset& data;
  const PresortedIndex<Index>& index;
  std::size_t begin;
  std::size_t end;
  int depth;
  SuffStats whole;
  std::span<const std::size_t> ranks;  // empty when the node is a forced leaf
  std::size_t num_vars_considered;

  std::size_t size() const noexcept { return end - begin; }
  std::span<const Index> rows() const { return index.segment(0, begin, end); }

  /// Whether the first `rank` rows of `var` can be told apart from the rest
  /// by a threshold. False when the rank falls inside a run of tied values.
  bool separates(std::size_t var, std::size_t rank) const {
    const auto seg = index.segment(var, begin, end);
    const auto col = data.column(var);
    return col[seg[rank - 1]] < col[seg[rank]];
  }

  /// Number of node rows with x[var] <= cut.
  std::size_t count_at_or_below(std::size_t var, double cut) const {
    const auto seg = index.segment(var, begin, end);
    const auto col = data.column(var);
    const auto it = std::upper_bound(seg.begin(), seg.end(), cut,
                                     [&](double c, Index row) { return c < col[row]; });
    return static_cast<std::size_t>(it - seg.begin());
  }
};

// Shared recursion for growing a tree and for scoring an existing one.
//
// A Policy supplies:
//   using Handle;                     tree-node handle carried down the recursion
//   static constexpr bool kUsesCriterion;  whether decide() needs the table
//   bool aborted() const;
//   void select_variables(std::size_t m, std::vector<std::size_t>& out);
//   CutChoice decide(Handle, const NodeView&, const CutCandidateTable&);
//   void leaf(Handle, const NodeView&, bool forced);
//   std::pair<Handle, Handle> split(Handle, const NodeView&, std::size_t var, double cut,
//                                   std::size_t rank);
//
// Node order is fixed: variable subset, then one decision, then either the
// leaf or the left subtree followed by the right subtree.
template <RowIndex Index, class Policy>
class NodeWalker {
 public:
  using Handle = typename Policy::Handle;

  NodeWalker(const Dataset& data, std::span<const double> residual, const GrowConfig& config,
             double sigma2, GrowWorkspace<Index>& ws, Policy& policy)
      : data_(data), residual_(residual), config_(config), sigma2_(sigma2), ws_(ws), policy_(policy) {
    if (residual.size() != data.num_rows()) throw ContractViolation("residual length must equal row count");
    if (!(sigma2 > 0.0)) throw ContractViolation("sigma2 must be positive");
  }

  void walk(std::size_t begin, std::size_t end, int depth, Handle root) {
    if (end <= begin) throw ContractViolation("cannot grow from an empty node");
    visit(begin, end, depth, root);
  }

 private:
  void visit(std::size_t begin, std::size_t end, int depth, Handle h) {
    if (policy_.aborted()) return;
    auto& idx = ws_.index();
    const std::size_t n_b = end - begin;
    const std::size_t num_vars = data_.num_vars();
    const SuffStats whole{n_b, segment_sum<Index>(residual_, idx.segment(0, begin, end))};

    const bool forced = depth >= config_.max_depth || n_b < 2;
    if (forced) {
      ws_.ranks.clear();
    } else {
      select_cutpoint_ranks(n_b, config_.num_cutpoints, ws_.ranks);
    }
    if (forced || ws_.ranks.empty()) {
      policy_.leaf(h, NodeView<Index>{data_, idx, begin, end, depth, whole, {}, 0}, true);
      return;
    }

    const std::size_t m = config_.mtry;
    if (m == num_vars) {
      ws_.vars.resize(num_vars);
      std::iota(ws_.vars.begin(), ws_.vars.end(), std::size_t{0});
    } else {
      policy_.select_variables(m, ws_.vars);
    }

    const NodeView<Index> view{data_, idx, begin, end, depth, whole, ws_.ranks, m};
    auto& table = ws_.table;
    if constexpr (Policy::kUsesCriterion) {
      const CriterionParams params{sigma2_, config_.tau, config_.alpha, config_.beta, depth};
      table.reset(nosplit_loglik(whole, params),
                  nosplit_weight(params, m, config_.null_weight_multiplier));
      // leaf_loglik split into a count-only part and a coefficient on sum^2,
      // hoisted out of the per-variable loop.
      const std::size_t num_ranks = ws_.ranks.size();
      ws_.rank_const.resize(num_ranks);
      ws_.left_quad.resize(num_ranks);
      ws_.right_quad.resize(num_ranks);
      const double tau = config_.tau;
      for (std::size_t k = 0; k < num_ranks; ++k) {
        const double nl = static_cast<double>(ws_.ranks[k]);
        const double nr = static_cast<double>(n_b - ws_.ranks[k]);
        ws_.rank_const[k] = -0.5 * (std::log1p(tau * nl / sigma2_) + std::log1p(tau * nr / sigma2_));
        ws_.left_quad[k] = 0.5 * tau / (sigma2_ * (sigma2_ + tau * nl));
        ws_.right_quad[k] = 0.5 * tau / (sigma2_ * (sigma2_ + tau * nr));
      }
      for (const std::size_t var : ws_.vars) {
        const auto seg = idx.segment(var, begin, end);
        const auto col = data_.column(var);
        scan_prefix_sums(residual_, std::span<const Index>(seg), std::span<const std::size_t>(ws_.ranks),
                         whole.sum, [&](std::size_t k, const SuffStats& l, const SuffStats& r) {
                           // A rank inside a tie cannot be expressed as x <= cut.
                           const std::size_t c = ws_.ranks[k];
                           if (!(col[seg[c - 1]] < col[seg[c]])) return;
                           table.add(var, c,
                                     ws_.rank_const[k] + ws_.left_quad[k] * l.sum * l.sum +
                                         ws_.right_quad[k] * r.sum * r.sum);
                         });
      }
    }

    const CutChoice choice = policy_.decide(h, view, table);
    if (policy_.aborted()) return;
    if (!choice.is_split()) {
      policy_.leaf(h, view, false);
      return;
    }

    const std::size_t rank = choice.rank;
    const auto pivot = idx.segment(choice.var, begin, end);
    const double cut = data_.value(pivot[rank - 1], choice.var);
    const auto [left, right] = policy_.split(h, view, choice.var, cut, rank);
    sift_in_place(idx, begin, end, choice.var, rank, ws_.goes_left(), ws_.scratch());
    visit(begin, begin + rank, depth + 1, left);
    visit(begin + rank, end, depth + 1, right);
  }

  const Dataset& data_;
  std::span<const double> residual_;
  const GrowConfig& config_;
  double sigma2_;
  GrowWorkspace<Index>& ws_;
  Policy& policy_;
};

namespace detail {

template <RowIndex Index>
class SamplingPolicy {
 public:
  using Handle = std::size_t;
  static constexpr bool kUsesCriterion = true;

  SamplingPolicy(Tree& tree, Rng& rng, std::span<const double> weights, double sigma2, double tau,
                 std::span<double> fit)
      : tree_(tree), rng_(rng), weights_(weights), sigma2_(sigma2), tau_(tau), fit_(fit) {}

  bool aborted() const noexcept { return false; }

  void select_variables(std::size_t m, std::vector<std::size_t>& out) {
    sample_m_variables(weights_, m, rng_, out);
  }

  CutChoice decide(Handle, const NodeView<Index>&, const CutCandidateTable& table) {
    return table.sample(rng_);
  }

  void leaf(Handle h, const NodeView<Index>& node, bool) {
    const double mu = sample_leaf_mu(node.whole, sigma2_, tau_, rng_);
    tree_.set_leaf_value(h, mu);
    if (!fit_.empty()) {
      for (const Index row : node.rows()) fit_[row] = mu;
    }
  }

  std::pair<Handle, Handle> split(Handle h, const NodeView<Index>&, std::size_t var, double cut,
                                  std::size_t) {
    return tree_.split(h, var, cut);
  }

 private:
  Tree& tree_;
  Rng& rng_;
  std::span<const double> weights_;
  double sigma2_;
  double tau_;
  std::span<double> fit_;
};

}  // namespace detail

/// Grows one tree over the rows of the workspace's root index. Writes the
/// tree's fitted value for every covered row into `fit` when it is nonempty.
template <RowIndex Index>
Tree grow_tree(GrowWorkspace<Index>& ws, const Dataset& data, std::span<const double> residual,
               const GrowConfig& config, std::span<const double> weights, double sigma2, Rng& rng,
               std::span<double> fit = {}, int depth = 0) {
  Tree tree(data.num_vars(), depth);
  ws.reset();
  detail::SamplingPolicy<Index> policy(tree, rng, weights, sigma2, config.tau, fit);
  NodeWalker<Index, detail::SamplingPolicy<Index>> walker(data, residual, config, sigma2, ws, policy);
  walker.walk(0, ws.index().node_size(), depth, Tree::root());
  return tree;
}

/// Grows a subtree from the node described by `idx`, starting at `depth`.
template <RowIndex Index>
Tree grow_from_root(std::span<const double> residual, const PresortedIndex<Index>& idx,
                    const Dataset& data, int depth, const GrowConfig& config,
                    std::span<const double> weights, double sigma2, Rng& rng) {
  config.validate(data.num_vars());
  if (idx.node_size() == 0) throw ContractViolation("cannot grow from an empty node");
  if (weights.size() != data.num_vars()) throw ContractViolation("one weight per variable is required");
  GrowWorkspace<Index> ws(data, idx);
  return grow_tree(ws, data, residual, config, weights, sigma2, rng, {}, depth);
}

}  // namespace xbart
