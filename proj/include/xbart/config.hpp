#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>

#include "xbart/dataset.hpp"
#include "xbart/error.hpp"
#include "xbart/grower.hpp"

namespace xbart {

/// User-facing sampler settings. Unset optionals take data-dependent
/// defaults in resolve().
struct XbartConfig {
  std::optional<std::size_t> num_trees;
  std::size_t num_sweeps = 40;
  std::size_t burnin = 15;
  std::optional<double> tau;
  double alpha = 0.95;
  double beta = 1.25;
  std::optional<std::size_t> num_cutpoints;
  std::optional<std::size_t> mtry;
  double sigma_prior_shape = 3.0;
  std::optional<double> sigma_prior_scale;
  std::uint64_t seed = 0;
  double null_weight_multiplier = 1.0;
  int max_depth = 40;
  // Experimental per-sweep Metropolis-Hastings correction. Requires mtry == V.
  bool mh = false;
};

/// Every setting made concrete for one dataset.
struct ResolvedConfig {
  std::size_t num_trees = 1;
  std::size_t num_sweeps = 40;
  std::size_t burnin = 15;
  double tau = 1.0;
  double alpha = 0.95;
  double beta = 1.25;
  std::size_t num_cutpoints = 100;
  std::size_t mtry = 1;
  double sigma_prior_shape = 3.0;
  double sigma_prior_scale = 1.0;
  std::uint64_t seed = 0;
  double null_weight_multiplier = 1.0;
  int max_depth = 40;
  bool mh = false;

  GrowConfig grow_config(std::size_t mtry_now) const {
    return GrowConfig{num_cutpoints, mtry_now, tau, alpha, beta, max_depth, null_weight_multiplier};
  }

  friend bool operator==(const ResolvedConfig&, const ResolvedConfig&) = default;
};

/// max(1, round(0.25 (log n)^(log log n)))
inline std::size_t default_num_trees(std::size_t n) {
  if (n < 2) return 1;
  const double ln = std::log(static_cast<double>(n));
  const double l = 0.25 * std::pow(ln, std::log(ln));
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(l)));
}

/// max(ceil(sqrt n), 100)
inline std::size_t default_num_cutpoints(std::size_t n) {
  const auto root = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  return std::max<std::size_t>(root, 100);
}

inline ResolvedConfig resolve(const XbartConfig& cfg, const Dataset& data) {
  const std::size_t n = data.num_rows();
  const std::size_t num_vars = data.num_vars();
  if (n < 2) throw InputError("at least two observations are required to fit");
  const double var_y = sample_variance(data.y());
  if (!(var_y > 0.0)) throw InputError("response has zero variance; nothing to fit");

  ResolvedConfig r;
  r.num_trees = cfg.num_trees.value_or(default_num_trees(n));
  r.num_sweeps = cfg.num_sweeps;
  r.burnin = cfg.burnin;
  r.tau = cfg.tau.value_or(0.3 * var_y / static_cast<double>(r.num_trees));
  r.alpha = cfg.alpha;
  r.beta = cfg.beta;
  r.num_cutpoints = cfg.num_cutpoints.value_or(default_num_cutpoints(n));
  r.mtry = cfg.mtry.value_or(num_vars);
  r.sigma_prior_shape = cfg.sigma_prior_shape;
  r.sigma_prior_scale = cfg.sigma_prior_scale.value_or(var_y);
  r.seed = cfg.seed;
  r.null_weight_multiplier = cfg.null_weight_multiplier;
  r.max_depth = cfg.max_depth;
  r.mh = cfg.mh;

  if (r.num_trees < 1) throw InputError("number of trees must be at least 1");
  if (r.num_sweeps < 1) throw InputError("number of sweeps must be at least 1");
  if (r.burnin >= r.num_sweeps) throw InputError("burn-in must be smaller than the number of sweeps");
  if (!(r.alpha > 0.0 && r.alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
  if (!(r.sigma_prior_shape > 0.0) || !(r.sigma_prior_scale > 0.0)) {
    throw InputError("sigma prior shape and scale must be positive");
  }
  if (r.mh && r.mtry != num_vars) {
    throw InputError("Metropolis-Hastings mode requires mtry equal to the number of predictors");
  }
  r.grow_config(r.mtry).validate(num_vars);
  return r;
}

}  // namespace xbart
