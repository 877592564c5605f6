#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "xbart/error.hpp"

namespace xbart {

/// SplitMix64 finalizer. Used to derive independent seeds from
/// (base seed, counter) pairs.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                    std::uint64_t counter = 0) noexcept {
  return splitmix64(splitmix64(splitmix64(base) ^ stream) + counter);
}

// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard. Variates are built here rather than with <random>
// distributions, whose algorithms differ between standard libraries.
//
//   uniform  : top 53 bits of one engine word, in [0, 1)
//   normal   : Box-Muller, two uniforms per draw, no cached spare
//   gamma    : Marsaglia-Tsang squeeze; shape < 1 boosted via U^(1/shape)
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // (0, 1]; safe to take the log of.
  double uniform_pos() { return 1.0 - uniform(); }

  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Gamma(shape, scale = 1).
  double gamma(double shape) {
    detail::require(shape > 0.0, "gamma shape must be positive");
    if (shape < 1.0) {
      const double boost = std::pow(uniform_pos(), 1.0 / shape);
      return gamma(shape + 1.0) * boost;
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double z;
      double v;
      do {
        z = normal();
        v = 1.0 + c * z;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_pos();
      if (u < 1.0 - 0.0331 * z * z * z * z) return d * v;
      if (std::log(u) < 0.5 * z * z + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  /// Inverse-Gamma with density proportional to x^(-shape-1) exp(-scale/x).
  double inverse_gamma(double shape, double scale) { return scale / gamma(shape); }

  std::vector<double> dirichlet(std::span<const double> concentration) {
    std::vector<double> draw(concentration.size());
    double total = 0.0;
    for (std::size_t i = 0; i < draw.size(); ++i) {
      draw[i] = gamma(concentration[i]);
      total += draw[i];
    }
    if (!(total > 0.0) || !std::isfinite(total)) {
      throw NumericError("Dirichlet draw degenerated (gamma variates summed to " +
                         std::to_string(total) + ")");
    }
    for (double& d : draw) d /= total;
    return draw;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace xbart
