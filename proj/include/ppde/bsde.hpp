#pragma once

// Backward least-squares Monte-Carlo solver for
//   Y_t = xi + int_t^T F(s, omega, Y_s, Z_s) ds - int_t^T Z_s . dW_s,
// nonlinear expectations bounded by drift level L, pathwise values u(t, omega)
// and dynamic-programming residuals.

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

/// Z is stored per path and step as the integrand against the driving noise
/// dW (equivalently sigma^T times the gradient in the path variable), which is
/// the argument the driver receives.
struct BsdeSolution {
  TimeGrid grid{1.0, 1};
  std::size_t paths = 0;
  std::size_t dim = 1;
  std::size_t first = 0;  // earliest solved index (prefix index for conditional ensembles)
  std::uint64_t seed = 0;
  // Time-major: Y(k, i) is y[i * N + k], Z(k, i) starts at z[(i * N + k) * d].
  std::vector<double> y;          // (n+1) x N
  std::vector<double> z;          // n x N x d
  std::vector<double> residuals;  // per step regression residual rms
  double y0 = 0.0;
  double std_error = 0.0;

  std::size_t steps() const noexcept { return grid.steps(); }
  double Y(std::size_t k, std::size_t i) const noexcept { return y[i * paths + k]; }
  std::span<const double> Z(std::size_t k, std::size_t i) const noexcept {
    return {z.data() + (i * paths + k) * dim, dim};
  }
};

BsdeSolution solve_bsde(const AdaptedFunctional& driver, const AdaptedFunctional& terminal,
                        const PathEnsemble& ensemble, const ConditionalExpectation& estimator);

/// Solves on [t_first, t_{stop_k}] per path with the given terminal values at
/// the stop indices.
BsdeSolution solve_bsde_stopped(const AdaptedFunctional& driver,
                                std::span<const double> terminal_values,
                                const StoppingRule& stop, const PathEnsemble& ensemble,
                                const ConditionalExpectation& estimator, std::size_t first = 0);

enum class Side { upper, lower };

/// Upper side: driver +L|Z|. Lower side: -upper(-xi), which equals the driver
/// -L|Z| and makes the duality exact.
BsdeSolution nonlinear_expectation(std::span<const double> target_values,
                                   const StoppingRule& stop, double bound, Side side,
                                   const PathEnsemble& ensemble,
                                   const ConditionalExpectation& estimator,
                                   std::size_t first = 0);
BsdeSolution nonlinear_expectation(const AdaptedFunctional& target, double bound, Side side,
                                   const PathEnsemble& ensemble,
                                   const ConditionalExpectation& estimator);
/// Target process X stopped by `tau`: the terminal value of path k is X_{tau_k}.
BsdeSolution nonlinear_expectation(const AdaptedFunctional& process, const StoppingRule& tau,
                                   double bound, Side side, const PathEnsemble& ensemble,
                                   const ConditionalExpectation& estimator,
                                   std::size_t first = 0);

/// Linear expectation under the drifted measure with control lambda: driver Z . lambda.
BsdeSolution lambda_expectation(const AdaptedFunctional& target, const AdaptedFunctional& control,
                                const PathEnsemble& ensemble,
                                const ConditionalExpectation& estimator);

/// Terminal (or stopped) values of a scalar functional on every path.
std::vector<double> stopped_values(const AdaptedFunctional& f, const PathEnsemble& ensemble,
                                   const StoppingRule& tau);

struct ValueEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// u(t_i, omega): BSDE on a conditional ensemble at (i, omega), read at t_i.
ValueEstimate value_functional(const AdaptedFunctional& sigma, const AdaptedFunctional& driver,
                               const AdaptedFunctional& terminal, std::size_t i,
                               const PathView& omega, std::size_t count, std::uint64_t seed,
                               const ConditionalExpectation& estimator);

struct DppOptions {
  std::size_t inner_paths = 0;  // 0: same as the outer count
  double terminal_offset = 0.0;  // added to u(t_j, .) before the composed solve
};

struct DppResult {
  double residual = 0.0;
  double std_error = 0.0;  // combined standard error of both estimates
  double direct = 0.0;
  double composed = 0.0;
};

/// |u(t_i, omega) - Y_i| where Y solves the BSDE on [t_i, t_j] with terminal
/// data u(t_j, .) evaluated path by path.
DppResult dpp_residual(const AdaptedFunctional& sigma, const AdaptedFunctional& driver,
                       const AdaptedFunctional& terminal, std::size_t i, const PathView& omega,
                       std::size_t j, std::size_t count, std::uint64_t seed,
                       const ConditionalExpectation& estimator, DppOptions options = {});

/// CSV with columns path,index,t,Y,Z0..Z{d-1}. At most `max_paths` paths.
void write_csv(const BsdeSolution& s, const std::filesystem::path& file,
               std::size_t max_paths = 64);
nlohmann::json summary(const BsdeSolution& s, const ConditionalExpectation& estimator,
                       std::optional<double> runtime_ms = std::nullopt);

}  // namespace ppde
