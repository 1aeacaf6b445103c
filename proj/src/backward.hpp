#pragma once

// Backward induction shared by the BSDE, nonlinear-expectation and Snell
// solvers. One explicit step per grid interval:
//   C_i = E[Y_{i+1} | F_i],  Z_i = E[(Y_{i+1} - C_i) dW_i | F_i] / h,
//   Y_i = C_i + h F(i, C_i, Z_i), then optionally reflected on a barrier.
// Paths with stop index <= i are frozen at their stop value.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ppde/paths.hpp"
#include "ppde/regression.hpp"

namespace ppde::detail {

enum class Barrier { none, lower, upper };

using StepDriver = std::function<double(std::size_t i, std::size_t k, double y,
                                        std::span<const double> z)>;

struct BackwardProblem {
  const PathEnsemble* ensemble = nullptr;
  const ConditionalExpectation* estimator = nullptr;
  std::size_t first = 0;
  std::vector<std::size_t> stop;    // per path, in [first, n]
  std::vector<double> stop_values;  // Y at the stop index
  StepDriver driver;                // empty means F = 0
  Barrier barrier = Barrier::none;
  const std::vector<double>* barrier_values = nullptr;  // (n+1) x N, time-major
};

struct BackwardResult {
  std::size_t paths = 0, steps = 0, dim = 0, first = 0;
  // Time-major storage: entry (k, i) of Y sits at i * N + k.
  std::vector<double> y;           // (n+1) x N
  std::vector<double> z;           // n x N x d
  std::vector<double> dk;          // n x N, reflected problems only
  std::vector<double> driver_sum;  // per path: sum over active steps of h F
  std::vector<double> residuals;   // per step regression residual rms
  double y0 = 0.0;
};

BackwardResult backward_sweep(const BackwardProblem& problem);

/// Weighted mean and its standard error sqrt(sum w^2 (x - mean)^2) / sum w.
/// Identical values give that value exactly and a zero error.
std::pair<double, double> weighted_mean_se(std::span<const double> values,
                                           std::span<const double> weights);

}  // namespace ppde::detail
