#include "ppde/bsde.hpp"

#include <cmath>
#include <fstream>

#include "backward.hpp"
#include "ppde/errors.hpp"
#include "ppde/parallel.hpp"
#include "ppde/sde.hpp"

namespace ppde {
namespace {

double norm(std::span<const double> z) {
  double s = 0.0;
  for (double v : z) s += v * v;
  return std::sqrt(s);
}

BsdeSolution package(detail::BackwardResult&& r, const PathEnsemble& ensemble,
                     std::span<const double> terminal_values) {
  BsdeSolution s;
  s.grid = ensemble.grid();
  s.paths = r.paths;
  s.dim = r.dim;
  s.first = r.first;
  s.seed = ensemble.seed();
  s.y0 = r.y0;
  std::vector<double> flows(r.paths);
  for (std::size_t k = 0; k < r.paths; ++k) flows[k] = terminal_values[k] + r.driver_sum[k];
  s.std_error = detail::weighted_mean_se(flows, ensemble.weights()).second;
  s.y = std::move(r.y);
  s.z = std::move(r.z);
  s.residuals = std::move(r.residuals);
  return s;
}

BsdeSolution run(const detail::StepDriver& driver, std::span<const double> terminal_values,
                 const StoppingRule& stop, const PathEnsemble& ensemble,
                 const ConditionalExpectation& estimator, std::size_t first) {
  if (stop.size() != ensemble.size())
    throw ValidationError("stop", "stopping rule size differs from the ensemble");
  detail::BackwardProblem p;
  p.ensemble = &ensemble;
  p.estimator = &estimator;
  p.first = first;
  p.stop = stop.indices();
  p.stop_values.assign(terminal_values.begin(), terminal_values.end());
  p.driver = driver;
  return package(detail::backward_sweep(p), ensemble, terminal_values);
}

detail::StepDriver wrap(const AdaptedFunctional& driver, const PathEnsemble& ensemble) {
  driver.require(Role::driver, "driver");
  return [&driver, &ensemble](std::size_t i, std::size_t k, double y, std::span<const double> z) {
    return driver.drive(i, ensemble.path(k), y, z);
  };
}

void check_bound(double bound) {
  if (!(bound >= 0.0) || !std::isfinite(bound))
    throw ValidationError("L", "drift bound must be finite and nonnegative");
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<double> stopped_values(const AdaptedFunctional& f, const PathEnsemble& ensemble,
                                   const StoppingRule& tau) {
  f.require_scalar("target");
  if (tau.size() != ensemble.size())
    throw ValidationError("stop", "stopping rule size differs from the ensemble");
  std::vector<double> out(ensemble.size());
  parallel_for(ensemble.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      out[k] = f.role() == Role::terminal ? f.terminal_value(ensemble.path(k))
                                          : f.scalar(tau[k], ensemble.path(k));
      if (!std::isfinite(out[k])) throw NumericalError("non-finite target value", k, tau[k]);
    }
  });
  return out;
}

BsdeSolution solve_bsde(const AdaptedFunctional& driver, const AdaptedFunctional& terminal,
                        const PathEnsemble& ensemble, const ConditionalExpectation& estimator) {
  terminal.require(Role::terminal, "terminal");
  const auto stop = StoppingRule::fixed(ensemble.size(), ensemble.steps());
  const auto xi = stopped_values(terminal, ensemble, stop);
  return run(wrap(driver, ensemble), xi, stop, ensemble, estimator, 0);
}

BsdeSolution solve_bsde_stopped(const AdaptedFunctional& driver,
                                std::span<const double> terminal_values,
                                const StoppingRule& stop, const PathEnsemble& ensemble,
                                const ConditionalExpectation& estimator, std::size_t first) {
  return run(wrap(driver, ensemble), terminal_values, stop, ensemble, estimator, first);
}

BsdeSolution nonlinear_expectation(std::span<const double> target_values,
                                   const StoppingRule& stop, double bound, Side side,
                                   const PathEnsemble& ensemble,
                                   const ConditionalExpectation& estimator, std::size_t first) {
  check_bound(bound);
  detail::StepDriver driver;
  if (bound > 0.0)
    driver = [bound](std::size_t, std::size_t, double, std::span<const double> z) {
      return bound * norm(z);
    };
  if (side == Side::upper) return run(driver, target_values, stop, ensemble, estimator, first);

  std::vector<double> negated(target_values.size());
  for (std::size_t k = 0; k < negated.size(); ++k) negated[k] = -target_values[k];
  BsdeSolution s = run(driver, negated, stop, ensemble, estimator, first);
  for (double& v : s.y) v = -v;
  for (double& v : s.z) v = -v;
  s.y0 = -s.y0;
  return s;
}

BsdeSolution nonlinear_expectation(const AdaptedFunctional& target, double bound, Side side,
                                   const PathEnsemble& ensemble,
                                   const ConditionalExpectation& estimator) {
  const auto stop = StoppingRule::fixed(ensemble.size(), ensemble.steps());
  return nonlinear_expectation(stopped_values(target, ensemble, stop), stop, bound, side, ensemble,
                               estimator, 0);
}

BsdeSolution nonlinear_expectation(const AdaptedFunctional& process, const StoppingRule& tau,
                                   double bound, Side side, const PathEnsemble& ensemble,
                                   const ConditionalExpectation& estimator, std::size_t first) {
  return nonlinear_expectation(stopped_values(process, ensemble, tau), tau, bound, side, ensemble,
                               estimator, first);
}

BsdeSolution lambda_expectation(const AdaptedFunctional& target, const AdaptedFunctional& control,
                                const PathEnsemble& ensemble,
                                const ConditionalExpectation& estimator) {
  control.require(Role::control, "control");
  const std::size_t d = ensemble.dim();
  if (control.dim() != d) throw ValidationError("control", "control dimension differs from d");
  const auto stop = StoppingRule::fixed(ensemble.size(), ensemble.steps());
  const auto xi = stopped_values(target, ensemble, stop);
  detail::StepDriver driver = [&, d](std::size_t i, std::size_t k, double,
                                     std::span<const double> z) {
    thread_local std::vector<double> lambda;
    lambda.resize(d);
    control.vector(i, ensemble.path(k), lambda);
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += z[c] * lambda[c];
    return s;
  };
  return run(driver, xi, stop, ensemble, estimator, 0);
}

ValueEstimate value_functional(const AdaptedFunctional& sigma, const AdaptedFunctional& driver,
                               const AdaptedFunctional& terminal, std::size_t i,
                               const PathView& omega, std::size_t count, std::uint64_t seed,
                               const ConditionalExpectation& estimator) {
  terminal.require(Role::terminal, "terminal");
  const std::size_t n = omega.steps();
  if (i > n) throw ValidationError("index", "point index beyond the grid");
  if (i == n) return {terminal.terminal_value(omega), 0.0};
  const auto ensemble = conditional_ensemble(sigma, i, omega, count, seed);
  const auto stop = StoppingRule::fixed(count, n);
  const auto xi = stopped_values(terminal, ensemble, stop);
  const auto s = run(wrap(driver, ensemble), xi, stop, ensemble, estimator, i);
  return {s.y0, s.std_error};
}

DppResult dpp_residual(const AdaptedFunctional& sigma, const AdaptedFunctional& driver,
                       const AdaptedFunctional& terminal, std::size_t i, const PathView& omega,
                       std::size_t j, std::size_t count, std::uint64_t seed,
                       const ConditionalExpectation& estimator, DppOptions options) {
  const std::size_t n = omega.steps();
  if (i > j || j > n) throw ValidationError("index", "need i <= j <= n");
  if (i == j) return {};

  const auto direct = value_functional(sigma, driver, terminal, i, omega, count, seed, estimator);

  const auto outer = conditional_ensemble(sigma, i, omega, count, mix(seed, 0));
  const std::size_t inner = options.inner_paths ? options.inner_paths : count;
  std::vector<double> uj(count);
  for (std::size_t k = 0; k < count; ++k) {
    uj[k] = value_functional(sigma, driver, terminal, j, outer.path(k), inner, mix(seed, k + 1),
                             estimator)
                .value +
            options.terminal_offset;
  }
  const auto composed = run(wrap(driver, outer), uj, StoppingRule::fixed(count, j), outer,
                            estimator, i);

  DppResult r;
  r.direct = direct.value;
  r.composed = composed.y0;
  r.residual = std::abs(r.direct - r.composed);
  r.std_error = std::hypot(direct.std_error, composed.std_error);
  return r;
}

void write_csv(const BsdeSolution& s, const std::filesystem::path& file, std::size_t max_paths) {
  std::ofstream out(file);
  if (!out) throw ValidationError("out", "cannot open " + file.string());
  out.precision(17);
  out << "path,index,t,Y";
  for (std::size_t c = 0; c < s.dim; ++c) out << ",Z" << c;
  out << '\n';
  const std::size_t n = s.steps();
  const std::size_t rows = std::min(max_paths, s.paths);
  for (std::size_t k = 0; k < rows; ++k) {
    for (std::size_t i = s.first; i <= n; ++i) {
      out << k << ',' << i << ',' << s.grid.time(i) << ',' << s.Y(k, i);
      for (std::size_t c = 0; c < s.dim; ++c) out << ',' << (i < n ? s.Z(k, i)[c] : 0.0);
      out << '\n';
    }
  }
}

nlohmann::json summary(const BsdeSolution& s, const ConditionalExpectation& estimator,
                       std::optional<double> runtime_ms) {
  nlohmann::json j{{"Y0", s.y0},
                   {"std_error", s.std_error},
                   {"N", s.paths},
                   {"n", s.steps()},
                   {"d", s.dim},
                   {"T", s.grid.horizon()},
                   {"seed", s.seed},
                   {"basis", estimator.describe()}};
  double worst = 0.0;
  for (double r : s.residuals) worst = std::max(worst, r);
  j["max_residual_rms"] = worst;
  if (runtime_ms) j["runtime_ms"] = *runtime_ms;
  return j;
}

}  // namespace ppde
