#pragma once

// Reflected backward induction: Snell envelopes of an obstacle under the
// upper nonlinear expectation, optimal stopping rules, the upper-barrier
// variant, and an exact binary-tree oracle.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppde/paths.hpp"
#include "ppde/regression.hpp"
#include "ppde/stopping.hpp"

namespace ppde {

struct SnellOptions {
  double tol_contact = 1e-9;
  std::size_t first = 0;  // earliest solved index
};

struct SnellSolution {
  TimeGrid grid{1.0, 1};
  std::size_t paths = 0;
  std::size_t dim = 1;
  std::size_t first = 0;
  std::uint64_t seed = 0;
  double bound = 0.0;
  // Time-major storage, as in BsdeSolution.
  std::vector<double> y;   // (n+1) x N
  std::vector<double> x;   // obstacle, (n+1) x N
  std::vector<double> dk;  // n x N, nonnegative
  std::vector<double> z;   // n x N x d
  std::vector<std::size_t> horizon;
  StoppingRule tau{std::vector<std::size_t>{}};
  double value = 0.0;
  double std_error = 0.0;

  std::size_t steps() const noexcept { return grid.steps(); }
  double Y(std::size_t k, std::size_t i) const noexcept { return y[i * paths + k]; }
  double X(std::size_t k, std::size_t i) const noexcept { return x[i * paths + k]; }
  double dK(std::size_t k, std::size_t i) const noexcept { return dk[i * paths + k]; }
  std::span<const double> Z(std::size_t k, std::size_t i) const noexcept {
    return {z.data() + (i * paths + k) * dim, dim};
  }
};

/// Y = X at the per-path horizon; before it
/// Y_i = max(X_i, E[Y_{i+1} | F_i] + h L |Z_i|), dK_i = (Y_i - continuation)^+.
SnellSolution snell_envelope(const AdaptedFunctional& obstacle, double bound,
                             const StoppingRule& horizon, const PathEnsemble& ensemble,
                             const ConditionalExpectation& estimator, SnellOptions options = {});

/// First index i >= first with Y_i - X_i <= tol on each path.
StoppingRule optimal_stopping_rule(const SnellSolution& s, double tol_contact = 1e-9);

/// Drift attaining the sup in L|z|: L z/|z|, and 0 at z = 0.
std::vector<double> optimal_drift(std::span<const double> z, double bound);

struct UpperSnellSolution {
  TimeGrid grid{1.0, 1};
  std::size_t paths = 0;
  std::size_t first = 0;
  std::vector<double> y;   // (n+1) x N
  std::vector<double> u;   // barrier, (n+1) x N
  std::vector<double> dk;  // n x N
  double value = 0.0;

  double Y(std::size_t k, std::size_t i) const noexcept { return y[i * paths + k]; }
  double dK(std::size_t k, std::size_t i) const noexcept { return dk[i * paths + k]; }
};

/// Y_n = u_n; Y_i = min(u_i, E[Y_{i+1} | F_i] + h L |Z_i|).
UpperSnellSolution upper_snell_envelope(const AdaptedFunctional& barrier, double bound,
                                        const PathEnsemble& ensemble,
                                        const ConditionalExpectation& estimator,
                                        std::size_t first = 0);

/// All 2^depth paths of the +-sqrt(h) walk (sigma = 1, d = 1). Path k takes the
/// up move at step j when bit (depth-1-j) of k is clear. Increments are stored.
PathEnsemble tree_ensemble(std::size_t depth, double h);

struct TreeSnellResult {
  double value = 0.0;
  /// stop[j][q]: stop at node q of depth j (q in [0, 2^j)), same bit order as tree_ensemble.
  std::vector<std::vector<unsigned char>> stop;
  /// Best value over every stop/continue rule, when enumeration was requested.
  std::optional<double> enumerated;
};

/// Exact Snell value on the binary tree with the one-step rule
/// V = max(X, (V_up + V_down)/2 + L sqrt(h) |V_up - V_down| / 2).
/// Depth at most 12; enumeration requires depth at most 4.
TreeSnellResult brute_force_snell_tree(const AdaptedFunctional& obstacle, double bound,
                                       std::size_t depth, double h, bool enumerate = false);

/// CSV with columns path,index,t,Y,X,dK,stopped. At most `max_paths` paths.
void write_csv(const SnellSolution& s, const std::filesystem::path& file,
               std::size_t max_paths = 64);
nlohmann::json summary(const SnellSolution& s, const PathEnsemble& ensemble,
                       std::optional<double> runtime_ms = std::nullopt);

}  // namespace ppde
