#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "ppde/paths.hpp"

namespace ppde {

/// Gaussian stream of one path. The k-th draw is a pure function of
/// (global seed, path index, k), so paths can be simulated in any order or
/// on any number of threads.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t path);

  double gaussian() { return normal_(engine_); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

/// Euler-Maruyama for X_{i+1} = X_i + sigma(t_i, X) dW_i, dW_i ~ N(0, h I_d).
PathEnsemble simulate_base(const AdaptedFunctional& sigma, const TimeGrid& grid, std::size_t count,
                           std::size_t dim, std::uint64_t seed);

/// X_{i+1} = X_i + sigma(t_i, X) (dW_i + lambda(t_i, X) h). Uses the same
/// Gaussian stream as simulate_base, so lambda = 0 reproduces it bit for bit.
PathEnsemble simulate_drifted(const AdaptedFunctional& sigma, const AdaptedFunctional& control,
                              const TimeGrid& grid, std::size_t count, std::size_t dim,
                              std::uint64_t seed);

/// Density of the drifted law against the base ensemble, per path:
/// exp(sum lambda . dW - 1/2 sum |lambda|^2 h), accumulated in log space.
std::vector<double> girsanov_weights(const AdaptedFunctional& control, const PathEnsemble& base);

/// N full-length paths equal to `prefix` on 0..i and continued after t_i by
/// fresh noise under the shifted coefficient sigma^{t_i, prefix}. Suffix step
/// s draws from the same stream position as step s of simulate_base.
PathEnsemble conditional_ensemble(const AdaptedFunctional& sigma, std::size_t i,
                                  const PathView& prefix, std::size_t count, std::uint64_t seed);

}  // namespace ppde
