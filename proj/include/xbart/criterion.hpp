#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "xbart/error.hpp"
#include "xbart/presort.hpp"
#include "xbart/random.hpp"

namespace xbart {

struct CriterionParams {
  double sigma2 = 1.0;
  double tau = 1.0;
  double alpha = 0.95;
  double beta = 1.25;
  int depth = 0;
};

/// Prior probability that a node at `depth` splits: alpha (1 + d)^-beta.
inline double split_prior(double alpha, double beta, int depth) {
  return alpha * std::pow(1.0 + static_cast<double>(depth), -beta);
}

/// Integrated log-likelihood of one leaf with the partition-independent
/// constant dropped:
///   0.5 [ log(s2 / (s2 + tau n)) + tau s^2 / (s2 (s2 + tau n)) ]
inline double leaf_loglik(const SuffStats& stats, double sigma2, double tau) {
  const double n = static_cast<double>(stats.count);
  const double denom = sigma2 + tau * n;
  return 0.5 * (-std::log1p(tau * n / sigma2) + tau * stats.sum * stats.sum / (sigma2 * denom));
}

inline double split_loglik(const SuffStats& left, const SuffStats& right,
                           const CriterionParams& params) {
  if (left.count == 0 || right.count == 0) {
    throw ContractViolation("split_loglik needs two nonempty children");
  }
  return leaf_loglik(left, params.sigma2, params.tau) +
         leaf_loglik(right, params.sigma2, params.tau);
}

inline double nosplit_loglik(const SuffStats& whole, const CriterionParams& params) {
  if (whole.count == 0) throw ContractViolation("nosplit_loglik needs a nonempty node");
  return leaf_loglik(whole, params.sigma2, params.tau);
}

/// Aggregate weight of the shared no-split entry: one null cut-point per
/// considered variable, each weighted (1 - p) / p with p the split prior,
/// times an optional growth multiplier.
inline double nosplit_weight(const CriterionParams& params, std::size_t num_vars_considered,
                             double multiplier = 1.0) {
  if (params.depth < 0) throw ContractViolation("depth must be nonnegative");
  const double p = split_prior(params.alpha, params.beta, params.depth);
  return multiplier * static_cast<double>(num_vars_considered) * (1.0 - p) / p;
}

/// One candidate in a node's Bayes-rule draw. rank == 0 is the null
/// cut-point (do not split); it is always entry 0.
struct CutEntry {
  std::size_t var = 0;
  std::size_t rank = 0;
  double loglik = 0.0;
  double log_weight = 0.0;

  bool is_split() const noexcept { return rank != 0; }
  double score() const noexcept { return loglik + log_weight; }
};

struct CutChoice {
  std::size_t entry = 0;
  std::size_t var = 0;
  std::size_t rank = 0;

  bool is_split() const noexcept { return rank != 0; }
};

class CutCandidateTable {
 public:
  // exp(-50) < 2e-22: below the resolution of any normalizer over fewer
  // than 1e6 entries, so such weights are taken as exactly zero.
  static constexpr double kNegligibleLogWeight = -50.0;

  static double relative_weight(double score, double max) {
    const double d = score - max;
    return d < kNegligibleLogWeight ? 0.0 : std::exp(d);
  }

  void reset(double nosplit_ll, double nosplit_weight) {
    entries_.clear();
    entries_.push_back(CutEntry{0, 0, nosplit_ll,
                                nosplit_weight > 0.0 ? std::log(nosplit_weight)
                                                     : -std::numeric_limits<double>::infinity()});
    max_ = entries_.front().score();
  }

  // Active cut-points carry unit weight.
  void add(std::size_t var, std::size_t rank, double loglik) {
    entries_.push_back(CutEntry{var, rank, loglik, 0.0});
    if (!(loglik <= max_)) max_ = std::isnan(max_) ? max_ : loglik;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const CutEntry& entry(std::size_t i) const { return entries_[i]; }
  const std::vector<CutEntry>& entries() const noexcept { return entries_; }

  double max_score() const noexcept { return max_; }

  /// log of the normalizing sum of exp(score).
  double log_normalizer() const {
    const double m = max_score();
    if (!std::isfinite(m)) return m;
    double total = 0.0;
    for (const auto& e : entries_) total += relative_weight(e.score(), m);
    return m + std::log(total);
  }

  /// Normalized log-probability of entry i.
  double log_probability(std::size_t i) const { return entries_.at(i).score() - log_normalizer(); }

  std::vector<double> probabilities() const {
    require_positive_mass();
    const double m = max_score();
    std::vector<double> p(entries_.size());
    double total = 0.0;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      p[i] = relative_weight(entries_[i].score(), m);
      total += p[i];
    }
    for (double& x : p) x /= total;
    return p;
  }

  /// Index of the entry matching (var, rank), or size() if absent.
  std::size_t find(std::size_t var, std::size_t rank) const {
    for (std::size_t i = 1; i < entries_.size(); ++i) {
      if (entries_[i].var == var && entries_[i].rank == rank) return i;
    }
    return entries_.size();
  }

  CutChoice sample(Rng& rng) const {
    require_positive_mass();
    const double m = max_score();
    weights_.resize(entries_.size());
    double total = 0.0;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      weights_[i] = relative_weight(entries_[i].score(), m);
      total += weights_[i];
    }
    const double target = rng.uniform() * total;
    double running = 0.0;
    std::size_t chosen = entries_.size() - 1;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      running += weights_[i];
      if (target < running) {
        chosen = i;
        break;
      }
    }
    // Rounding can leave target == total; fall back to the last positive entry.
    while (weights_[chosen] == 0.0 && chosen > 0) --chosen;
    const auto& e = entries_[chosen];
    return CutChoice{chosen, e.var, e.rank};
  }

 private:
  void require_positive_mass() const {
    if (entries_.empty()) throw ContractViolation("candidate table is empty");
    const double m = max_score();
    if (std::isnan(m) || m == std::numeric_limits<double>::infinity()) {
      throw NumericError("candidate table holds a non-finite score");
    }
    if (m == -std::numeric_limits<double>::infinity()) {
      throw ContractViolation("every candidate in the table has zero weight");
    }
  }

  std::vector<CutEntry> entries_;
  // Running max of scores; NaN once any score is NaN.
  double max_ = -std::numeric_limits<double>::infinity();
  mutable std::vector<double> weights_;
};

inline CutChoice sample_cutpoint(const CutCandidateTable& table, Rng& rng) {
  return table.sample(rng);
}

}  // namespace xbart
