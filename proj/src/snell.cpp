#include "ppde/snell.hpp"

#include <cmath>
#include <fstream>

#include "backward.hpp"
#include "ppde/errors.hpp"
#include "ppde/parallel.hpp"

namespace ppde {
namespace {

double norm(std::span<const double> z) {
  double s = 0.0;
  for (double v : z) s += v * v;
  return std::sqrt(s);
}

void check_bound(double bound) {
  if (!(bound >= 0.0) || !std::isfinite(bound))
    throw ValidationError("L", "drift bound must be finite and nonnegative");
}

std::vector<double> evaluate_all(const AdaptedFunctional& f, const PathEnsemble& ensemble,
                                 std::size_t first) {
  f.require_scalar("obstacle");
  const std::size_t N = ensemble.size(), cols = ensemble.steps() + 1;
  std::vector<double> out(N * cols, 0.0);
  parallel_for(N, [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const PathView path = ensemble.path(k);
      for (std::size_t i = first; i < cols; ++i) {
        const double v = f.role() == Role::terminal ? f.terminal_value(path) : f.scalar(i, path);
        if (!std::isfinite(v)) throw NumericalError("non-finite obstacle value", k, i);
        out[i * N + k] = v;
      }
    }
  });
  return out;
}

detail::StepDriver drift_driver(double bound) {
  if (bound == 0.0) return {};
  return [bound](std::size_t, std::size_t, double, std::span<const double> z) {
    return bound * norm(z);
  };
}

}  // namespace

SnellSolution snell_envelope(const AdaptedFunctional& obstacle, double bound,
                             const StoppingRule& horizon, const PathEnsemble& ensemble,
                             const ConditionalExpectation& estimator, SnellOptions options) {
  check_bound(bound);
  const std::size_t N = ensemble.size(), n = ensemble.steps();
  if (horizon.size() != N) throw ValidationError("horizon", "horizon rule size differs from N");

  SnellSolution s;
  s.x = evaluate_all(obstacle, ensemble, options.first);

  detail::BackwardProblem p;
  p.ensemble = &ensemble;
  p.estimator = &estimator;
  p.first = options.first;
  p.stop = horizon.indices();
  p.stop_values.resize(N);
  for (std::size_t k = 0; k < N; ++k) {
    if (horizon[k] < options.first || horizon[k] > n)
      throw ValidationError("horizon", "horizon index outside [first, n]");
    p.stop_values[k] = s.x[horizon[k] * N + k];
  }
  p.driver = drift_driver(bound);
  p.barrier = detail::Barrier::lower;
  p.barrier_values = &s.x;
  auto r = detail::backward_sweep(p);

  s.grid = ensemble.grid();
  s.paths = N;
  s.dim = ensemble.dim();
  s.first = options.first;
  s.seed = ensemble.seed();
  s.bound = bound;
  s.y = std::move(r.y);
  s.dk = std::move(r.dk);
  s.z = std::move(r.z);
  s.horizon = horizon.indices();
  s.value = r.y0;
  s.tau = optimal_stopping_rule(s, options.tol_contact);

  // Cash flow of the stopped problem: X at tau* plus the accumulated drift term.
  const double h = s.grid.spacing();
  std::vector<double> flows(N);
  for (std::size_t k = 0; k < N; ++k) {
    double acc = s.X(k, s.tau[k]);
    for (std::size_t i = s.first; i < s.tau[k]; ++i) acc += h * bound * norm(s.Z(k, i));
    flows[k] = acc;
  }
  s.std_error = detail::weighted_mean_se(flows, ensemble.weights()).second;
  return s;
}

StoppingRule optimal_stopping_rule(const SnellSolution& s, double tol_contact) {
  std::vector<std::size_t> tau(s.paths);
  for (std::size_t k = 0; k < s.paths; ++k) {
    std::size_t i = s.first;
    while (i < s.horizon[k] && s.Y(k, i) - s.X(k, i) > tol_contact) ++i;
    tau[k] = i;
  }
  return StoppingRule(std::move(tau));
}

std::vector<double> optimal_drift(std::span<const double> z, double bound) {
  std::vector<double> lambda(z.size(), 0.0);
  const double r = norm(z);
  if (r > 0.0)
    for (std::size_t c = 0; c < z.size(); ++c) lambda[c] = bound * z[c] / r;
  return lambda;
}

UpperSnellSolution upper_snell_envelope(const AdaptedFunctional& barrier, double bound,
                                        const PathEnsemble& ensemble,
                                        const ConditionalExpectation& estimator,
                                        std::size_t first) {
  check_bound(bound);
  const std::size_t N = ensemble.size(), n = ensemble.steps();
  UpperSnellSolution s;
  s.u = evaluate_all(barrier, ensemble, first);

  detail::BackwardProblem p;
  p.ensemble = &ensemble;
  p.estimator = &estimator;
  p.first = first;
  p.stop.assign(N, n);
  p.stop_values.resize(N);
  for (std::size_t k = 0; k < N; ++k) p.stop_values[k] = s.u[n * N + k];
  p.driver = drift_driver(bound);
  p.barrier = detail::Barrier::upper;
  p.barrier_values = &s.u;
  auto r = detail::backward_sweep(p);

  s.grid = ensemble.grid();
  s.paths = N;
  s.first = first;
  s.y = std::move(r.y);
  s.dk = std::move(r.dk);
  s.value = r.y0;
  return s;
}

void write_csv(const SnellSolution& s, const std::filesystem::path& file, std::size_t max_paths) {
  std::ofstream out(file);
  if (!out) throw ValidationError("out", "cannot open " + file.string());
  out.precision(17);
  out << "path,index,t,Y,X,dK,stopped\n";
  const std::size_t n = s.steps();
  const std::size_t rows = std::min(max_paths, s.paths);
  for (std::size_t k = 0; k < rows; ++k) {
    for (std::size_t i = s.first; i <= n; ++i) {
      out << k << ',' << i << ',' << s.grid.time(i) << ',' << s.Y(k, i) << ',' << s.X(k, i)
          << ',' << (i < n ? s.dK(k, i) : 0.0) << ',' << (i >= s.tau[k] ? 1 : 0) << '\n';
    }
  }
}

nlohmann::json summary(const SnellSolution& s, const PathEnsemble& ensemble,
                       std::optional<double> runtime_ms) {
  nlohmann::json j{{"V0", s.value},
                   {"std_error", s.std_error},
                   {"mean_tau", s.tau.mean_time(ensemble)},
                   {"L", s.bound},
                   {"N", s.paths},
                   {"n", s.steps()},
                   {"seed", s.seed}};
  if (runtime_ms) j["runtime_ms"] = *runtime_ms;
  return j;
}

}  // namespace ppde
