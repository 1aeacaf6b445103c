#include "backward.hpp"

#include <algorithm>
#include <cmath>

#include "ppde/errors.hpp"
#include "ppde/parallel.hpp"

namespace ppde::detail {

std::pair<double, double> weighted_mean_se(std::span<const double> values,
                                           std::span<const double> weights) {
  double sw = 0.0, swx = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    sw += weights[k];
    swx += weights[k] * values[k];
  }
  if (!(sw > 0.0)) return {0.0, 0.0};
  if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values[0]; }))
    return {values[0], 0.0};
  const double mean = swx / sw;
  double acc = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    const double dx = values[k] - mean;
    acc += weights[k] * weights[k] * dx * dx;
  }
  return {mean, std::sqrt(acc) / sw};
}

BackwardResult backward_sweep(const BackwardProblem& p) {
  const PathEnsemble& ens = *p.ensemble;
  const std::size_t N = ens.size(), n = ens.steps(), d = ens.dim();
  const std::size_t cols = n + 1;
  const double h = ens.grid().spacing();
  if (p.first > n) throw ValidationError("index", "start index beyond the grid");
  if (p.stop.size() != N || p.stop_values.size() != N)
    throw ValidationError("terminal", "one stop index and value per path required");
  if (p.barrier != Barrier::none &&
      (!p.barrier_values || p.barrier_values->size() != N * cols))
    throw ValidationError("barrier", "barrier values must be N x (n+1)");

  BackwardResult r;
  r.paths = N;
  r.steps = n;
  r.dim = d;
  r.first = p.first;
  r.y.assign(N * cols, 0.0);
  r.z.assign(N * n * d, 0.0);
  if (p.barrier != Barrier::none) r.dk.assign(N * n, 0.0);
  r.driver_sum.assign(N, 0.0);
  r.residuals.assign(n, 0.0);

  for (std::size_t k = 0; k < N; ++k) {
    if (p.stop[k] < p.first || p.stop[k] > n)
      throw ValidationError("stop", "stop index outside [first, n] on path " + std::to_string(k));
    if (!std::isfinite(p.stop_values[k]))
      throw NumericalError("non-finite terminal value", k, p.stop[k]);
    for (std::size_t i = p.stop[k]; i <= n; ++i) r.y[i * N + k] = p.stop_values[k];
  }

  std::vector<unsigned char> active(N);
  std::vector<double> next(N), cont(N), zi(N * d);
  for (std::size_t step = n; step-- > p.first;) {
    std::size_t n_active = 0;
    for (std::size_t k = 0; k < N; ++k) {
      active[k] = p.stop[k] > step ? 1 : 0;
      n_active += active[k];
      next[k] = r.y[(step + 1) * N + k];
    }
    if (n_active == 0) continue;

    const auto projector = p.estimator->fit(ens, step, active);
    r.residuals[step] = projector->project(next, cont).residual_rms;
    estimate_z(*projector, ens, step, next, cont, active, zi);

    parallel_for(N, [&](std::size_t begin, std::size_t end) {
      for (std::size_t k = begin; k < end; ++k) {
        if (!active[k]) continue;
        std::span<const double> zk(zi.data() + k * d, d);
        double value = cont[k];
        if (p.driver) {
          const double f = p.driver(step, k, cont[k], zk);
          if (!std::isfinite(f)) throw NumericalError("non-finite driver output", k, step);
          value += h * f;
          r.driver_sum[k] += h * f;
        }
        if (p.barrier == Barrier::lower) {
          const double x = (*p.barrier_values)[step * N + k];
          if (x > value) {
            r.dk[step * N + k] = x - value;
            value = x;
          }
        } else if (p.barrier == Barrier::upper) {
          const double u = (*p.barrier_values)[step * N + k];
          if (u < value) {
            r.dk[step * N + k] = value - u;
            value = u;
          }
        }
        r.y[step * N + k] = value;
        std::copy(zk.begin(), zk.end(), r.z.begin() + static_cast<std::ptrdiff_t>((step * N + k) * d));
      }
    });
  }

  std::vector<double> start(N);
  for (std::size_t k = 0; k < N; ++k) start[k] = r.y[p.first * N + k];
  r.y0 = weighted_mean_se(start, ens.weights()).first;
  return r;
}

}  // namespace ppde::detail
