#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xbart/config.hpp"
#include "xbart/dataset.hpp"
#include "xbart/error.hpp"
#include "xbart/grower.hpp"
#include "xbart/mh.hpp"
#include "xbart/random.hpp"
#include "xbart/tree.hpp"

namespace xbart {

struct InverseGammaParams {
  double shape = 1.0;
  double scale = 1.0;
};

/// Conjugate posterior for sigma^2 given residuals r:
/// IG((N + a0) / 2, (r'r + eta) / 2).
inline InverseGammaParams sigma2_posterior(std::span<const double> residual, double a0, double eta) {
  if (!(a0 > 0.0) || !(eta > 0.0)) throw ContractViolation("sigma prior parameters must be positive");
  double rss = 0.0;
  for (double r : residual) rss += r * r;
  return {0.5 * (static_cast<double>(residual.size()) + a0), 0.5 * (rss + eta)};
}

inline double update_sigma2(std::span<const double> residual, double a0, double eta, Rng& rng) {
  const auto p = sigma2_posterior(residual, a0, eta);
  return rng.inverse_gamma(p.shape, p.scale);
}

/// w_bar <- w_bar - old + new, then w ~ Dirichlet(w_bar).
inline std::pair<std::vector<double>, std::vector<double>> update_variable_weights(
    std::span<const double> w_bar, std::span<const std::size_t> old_counts,
    std::span<const std::size_t> new_counts, Rng& rng) {
  const std::size_t num_vars = w_bar.size();
  if (old_counts.size() != num_vars || new_counts.size() != num_vars) {
    throw ContractViolation("split count vectors must have one entry per variable");
  }
  std::vector<double> updated(num_vars);
  for (std::size_t v = 0; v < num_vars; ++v) {
    const double base = w_bar[v] - static_cast<double>(old_counts[v]);
    if (base < 1.0) {
      throw AccountingError("variable " + std::to_string(v) + ": Dirichlet parameter " +
                            std::to_string(w_bar[v]) + " cannot release " +
                            std::to_string(old_counts[v]) + " splits");
    }
    updated[v] = base + static_cast<double>(new_counts[v]);
  }
  auto w = rng.dirichlet(updated);
  return {std::move(updated), std::move(w)};
}

/// Live state of the sampler, handed to FitOptions::on_tree_update.
struct SamplerState {
  std::vector<Tree> forest;
  std::vector<std::vector<double>> fits;  // cached per-tree fitted values
  std::vector<double> residual;           // y - sum of cached fits
  double sigma2 = 1.0;
  std::vector<double> w;
  std::vector<double> w_bar;
  std::size_t sweep = 0;  // 1-based
  std::size_t tree = 0;   // 0-based index of the tree just updated
};

struct FitDiagnostics {
  // Largest |r_i - (y_i - sum_l fit_l(x_i))| / (1 + |y_i|) seen at the
  // periodic full recomputations.
  double max_residual_drift = 0.0;
  std::size_t mh_proposals = 0;
  std::size_t mh_accepted = 0;

  friend bool operator==(const FitDiagnostics&, const FitDiagnostics&) = default;
};

/// Forests retained after burn-in, plus the per-sweep sigma^2 trace.
struct PosteriorDraws {
  ResolvedConfig config;
  std::size_t num_vars = 0;
  std::vector<std::vector<Tree>> sweeps;
  std::vector<double> sigma2_trace;
  FitDiagnostics diagnostics;

  friend bool operator==(const PosteriorDraws&, const PosteriorDraws&) = default;
};

struct FitOptions {
  std::function<void(const SamplerState&)> on_tree_update;
  std::size_t recompute_every = 10;
};

namespace detail {

inline void require_finite_residual(std::span<const double> r, std::size_t sweep, std::size_t tree) {
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!std::isfinite(r[i])) {
      throw NumericError("non-finite residual at row " + std::to_string(i) + " after sweep " +
                         std::to_string(sweep) + ", tree " + std::to_string(tree));
    }
  }
}

inline double recompute_residual(std::span<const double> y, const std::vector<std::vector<double>>& fits,
                                 std::vector<double>& residual) {
  double drift = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double f = 0.0;
    for (const auto& fit : fits) f += fit[i];
    const double fresh = y[i] - f;
    drift = std::max(drift, std::abs(residual[i] - fresh) / (1.0 + std::abs(y[i])));
    residual[i] = fresh;
  }
  return drift;
}

}  // namespace detail

template <RowIndex Index = std::uint32_t>
PosteriorDraws fit(const Dataset& data, const XbartConfig& user_config, const FitOptions& options = {}) {
  const ResolvedConfig cfg = resolve(user_config, data);
  const std::size_t n = data.num_rows();
  const std::size_t num_vars = data.num_vars();
  const std::size_t num_trees = cfg.num_trees;
  const auto y = data.y();

  Rng rng(cfg.seed);
  GrowWorkspace<Index> ws(data);

  SamplerState s;
  s.forest.assign(num_trees, Tree(num_vars));
  s.fits.assign(num_trees, std::vector<double>(n));
  for (auto& f : s.fits) {
    for (std::size_t i = 0; i < n; ++i) f[i] = y[i] / static_cast<double>(num_trees);
  }
  s.residual.assign(y.begin(), y.end());
  detail::recompute_residual(y, s.fits, s.residual);
  s.sigma2 = sample_variance(y);
  s.w.assign(num_vars, 1.0 / static_cast<double>(num_vars));
  s.w_bar.assign(num_vars, 1.0);

  PosteriorDraws draws;
  draws.config = cfg;
  draws.num_vars = num_vars;

  std::vector<double> partial(n);
  std::vector<double> new_fit(n);

  for (std::size_t k = 1; k <= cfg.num_sweeps; ++k) {
    s.sweep = k;
    const std::size_t m_now = k <= cfg.burnin ? num_vars : cfg.mtry;
    const GrowConfig gcfg = cfg.grow_config(m_now);

    // MH needs a tree-valued current state, so the first sweep always stands.
    const bool mh_sweep = cfg.mh && k > 1;
    SamplerState before;
    if (mh_sweep) before = s;

    for (std::size_t l = 0; l < num_trees; ++l) {
      s.tree = l;
      auto& fit_l = s.fits[l];
      for (std::size_t i = 0; i < n; ++i) partial[i] = s.residual[i] + fit_l[i];

      Tree grown = grow_tree(ws, data, partial, gcfg, s.w, s.sigma2, rng, std::span<double>(new_fit));
      for (std::size_t i = 0; i < n; ++i) s.residual[i] = partial[i] - new_fit[i];
      detail::require_finite_residual(s.residual, k, l);
      fit_l.swap(new_fit);

      auto [w_bar, w] = update_variable_weights(s.w_bar, s.forest[l].split_counts(), grown.split_counts(), rng);
      s.w_bar = std::move(w_bar);
      s.w = std::move(w);
      s.forest[l] = std::move(grown);

      // In MH mode sigma^2 is held fixed across the sweep and redrawn once
      // after the accept/reject step.
      if (!cfg.mh) s.sigma2 = update_sigma2(s.residual, cfg.sigma_prior_shape, cfg.sigma_prior_scale, rng);
      if (options.on_tree_update) options.on_tree_update(s);
    }

    if (mh_sweep) {
      const ForestSnapshot current{before.forest, before.sigma2, cfg.tau};
      const ForestSnapshot proposed{s.forest, before.sigma2, cfg.tau};
      const auto decision = mh_sweep_accept(current, proposed, data, cfg, rng, ws);
      ++draws.diagnostics.mh_proposals;
      if (decision.accepted) {
        ++draws.diagnostics.mh_accepted;
      } else {
        s.forest = std::move(before.forest);
        s.fits = std::move(before.fits);
        s.residual = std::move(before.residual);
        s.w_bar = std::move(before.w_bar);
        s.w = std::move(before.w);
      }
    }
    if (cfg.mh) s.sigma2 = update_sigma2(s.residual, cfg.sigma_prior_shape, cfg.sigma_prior_scale, rng);

    if (options.recompute_every > 0 && k % options.recompute_every == 0) {
      const double drift = detail::recompute_residual(y, s.fits, s.residual);
      draws.diagnostics.max_residual_drift = std::max(draws.diagnostics.max_residual_drift, drift);
    }

    draws.sigma2_trace.push_back(s.sigma2);
    if (k > cfg.burnin) draws.sweeps.push_back(s.forest);
  }
  return draws;
}

inline double predict_forest(const std::vector<Tree>& forest, const Matrix& x, std::size_t row) {
  double f = 0.0;
  for (const auto& t : forest) f += predict_tree(t, x, row);
  return f;
}

/// Pointwise average of the retained forests' predictions.
inline std::vector<double> predict(const PosteriorDraws& draws, const Matrix& x) {
  if (x.cols() != draws.num_vars) {
    throw InputError("prediction input has " + std::to_string(x.cols()) + " columns, model expects " +
                     std::to_string(draws.num_vars));
  }
  if (draws.sweeps.empty()) throw InputError("model holds no retained forests");
  std::vector<double> out(x.rows(), 0.0);
  const double scale = 1.0 / static_cast<double>(draws.sweeps.size());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double total = 0.0;
    for (const auto& forest : draws.sweeps) total += predict_forest(forest, x, i);
    out[i] = total * scale;
  }
  return out;
}

}  // namespace xbart
