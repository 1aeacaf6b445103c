#include "ppde/viscosity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <Eigen/Dense>

#include "backward.hpp"
#include "ppde/bsde.hpp"
#include "ppde/errors.hpp"
#include "ppde/sde.hpp"
#include "ppde/snell.hpp"

namespace ppde {
namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double value_at(const AdaptedFunctional& f, std::size_t i, const PathView& path) {
  return f.role() == Role::terminal ? f.terminal_value(path) : f.scalar(i, path);
}

std::vector<double> state_of(const PathView& path, std::size_t i) {
  const auto p = path.point(i);
  return {p.begin(), p.end()};
}

double stdev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

void check_point(const SamplePoint& point) {
  if (point.index >= point.path.grid().steps())
    throw ValidationError("point", "point index must be strictly before the horizon");
}

}  // namespace

AdaptedFunctional TestJet::process(std::size_t dim) const {
  if (!std::isfinite(alpha)) throw ValidationError("jet", "alpha must be finite");
  if (!beta.empty() && beta.size() != dim) throw ValidationError("jet", "beta has wrong dimension");
  for (double b : beta)
    if (!std::isfinite(b)) throw ValidationError("jet", "beta must be finite");
  return AdaptedFunctional::candidate(
      [a = alpha, b = beta](std::size_t i, const PathView& path) {
        double v = a * path.grid().time(i);
        for (std::size_t c = 0; c < b.size(); ++c) v += b[c] * path(i, c);
        return v;
      },
      "linear-test");
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "unknown";
}

std::string to_string(MartingaleMode m) {
  switch (m) {
    case MartingaleMode::p_sub: return "P-sub";
    case MartingaleMode::p_super: return "P-super";
    case MartingaleMode::e_sub: return "E-sub";
    case MartingaleMode::e_super: return "E-super";
  }
  return "unknown";
}

Verdict ViscosityReport::overall() const {
  if (checks.empty()) return Verdict::inconclusive;
  bool any_open = false;
  for (const auto& c : checks) {
    if (c.verdict == Verdict::fail) return Verdict::fail;
    any_open |= c.verdict == Verdict::inconclusive;
  }
  return any_open ? Verdict::inconclusive : Verdict::pass;
}

double ViscosityReport::min_margin() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& c : checks) m = std::min(m, c.margin);
  return m;
}

nlohmann::json ViscosityReport::to_json() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& c : checks) {
    list.push_back({{"name", c.name},
                    {"point", {{"id", c.point}, {"index", c.index}, {"t", c.time}, {"state", c.state}}},
                    {"margin", c.margin},
                    {"std_error", c.std_error},
                    {"verdict", to_string(c.verdict)},
                    {"detail", c.detail}});
  }
  return {{"verdict", to_string(overall())},
          {"min_margin", checks.empty() ? 0.0 : min_margin()},
          {"points", checks.size()},
          {"checks", list}};
}

void ViscosityReport::write_csv(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw ValidationError("out", "cannot open " + file.string());
  out.precision(17);
  out << "name,point,index,t,margin,std_error,verdict\n";
  for (const auto& c : checks)
    out << c.name << ',' << c.point << ',' << c.index << ',' << c.time << ',' << c.margin << ','
        << c.std_error << ',' << to_string(c.verdict) << '\n';
}

std::vector<SamplePoint> sample_points(const AdaptedFunctional& sigma, const TimeGrid& grid,
                                       std::size_t dim, std::size_t count, std::uint64_t seed,
                                       std::size_t lo, std::size_t hi) {
  if (lo > hi || hi > grid.steps()) throw ValidationError("points", "need lo <= hi <= n");
  const auto base = simulate_base(sigma, grid, count, dim, seed);
  std::mt19937_64 engine(mix(seed, 0xC0FFEE));
  std::uniform_int_distribution<std::size_t> pick(lo, hi);
  std::vector<SamplePoint> points;
  points.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const auto values = base.path(k).values();
    points.push_back({pick(engine), DiscretePath(grid, dim, {values.begin(), values.end()})});
  }
  return points;
}

GapResult test_process_gap(const AdaptedFunctional& sigma, const AdaptedFunctional& u,
                           const AdaptedFunctional& phi, double bound, const SamplePoint& point,
                           HorizonRule horizon, JetSide side, std::size_t count,
                           std::uint64_t seed, const ConditionalExpectation& estimator) {
  u.require_scalar("u");
  phi.require_scalar("test");
  check_point(point);
  if (horizon.max_steps < 1) throw ValidationError("horizon", "need at least one step");
  const std::size_t i = point.index;
  // The rule is fitted on the first `count` paths and evaluated on the other
  // `count`; in-sample evaluation would see its own regression noise.
  const auto pooled = conditional_ensemble(sigma, i, point.path, 2 * count, seed);
  std::vector<double> fit_w(2 * count, 0.0), eval_w(2 * count, 0.0);
  std::fill_n(fit_w.begin(), count, 1.0);
  std::fill(eval_w.begin() + static_cast<std::ptrdiff_t>(count), eval_w.end(), 1.0);
  const auto fit_ens = pooled.with_weights(std::move(fit_w));
  const auto eval_ens = pooled.with_weights(std::move(eval_w));
  const auto rule = StoppingRule::localizing(pooled, i, horizon.max_steps, horizon.radius);

  // Both sides reduce to gap = X_i - max_tau upper-E[X_tau] with X = psi (super)
  // or X = -psi (sub), psi = phi - u.
  const double sign = side == JetSide::super ? 1.0 : -1.0;
  const auto obstacle = AdaptedFunctional::obstacle(
      [&, sign](std::size_t j, const PathView& path) {
        return sign * (value_at(phi, j, path) - value_at(u, j, path));
      },
      "reflected-test");
  SnellOptions options;
  options.first = i;
  const auto envelope = snell_envelope(obstacle, bound, rule, fit_ens, estimator, options);
  const auto along = nonlinear_expectation(obstacle, envelope.tau, bound, Side::upper, eval_ens,
                                           estimator, i);

  GapResult r;
  const double x_i = envelope.X(0, i);
  r.gap = std::min(0.0, x_i - along.y0);
  r.std_error = along.std_error;
  r.tolerance = 3.0 * r.std_error + 1e-6;
  r.member = r.gap >= -r.tolerance;
  r.envelope = envelope.value;
  r.mean_tau = envelope.tau.mean_time(eval_ens) - point.path.grid().time(i);
  return r;
}

GapResult test_process_gap(const AdaptedFunctional& sigma, const AdaptedFunctional& u,
                           const TestJet& jet, double bound, const SamplePoint& point,
                           HorizonRule horizon, JetSide side, std::size_t count,
                           std::uint64_t seed, const ConditionalExpectation& estimator) {
  return test_process_gap(sigma, u, jet.process(point.path.dim()), bound, point, horizon, side,
                          count, seed, estimator);
}

double subsolution_residual(const TestJet& jet, double u_value, const AdaptedFunctional& driver,
                            const AdaptedFunctional& sigma, std::size_t i, const PathView& omega) {
  driver.require(Role::driver, "driver");
  sigma.require(Role::sigma, "sigma");
  const std::size_t d = omega.dim();
  std::vector<double> z(d, 0.0);
  if (!jet.beta.empty()) {
    if (jet.beta.size() != d) throw ValidationError("jet", "beta has wrong dimension");
    std::vector<double> s(d * d);
    sigma.vector(i, omega, s);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) z[a] += s[b * d + a] * jet.beta[b];
  }
  return -jet.alpha - driver.drive(i, omega, u_value, z);
}

TangencyResult tangency_point(const AdaptedFunctional& u, double bound,
                              const StoppingRule& horizon, const PathEnsemble& ensemble,
                              const ConditionalExpectation& estimator, double tol_contact) {
  SnellOptions options;
  options.tol_contact = tol_contact;
  const auto s = snell_envelope(u, bound, horizon, ensemble, estimator, options);
  const auto at_h = nonlinear_expectation(u, horizon, bound, Side::upper, ensemble, estimator);

  TangencyResult r;
  r.precondition_margin = s.X(0, 0) - at_h.y0;
  r.precondition_std_error = at_h.std_error;
  if (r.precondition_margin < -3.0 * r.precondition_std_error)
    throw ValidationError("candidate", "u_0 is below the upper expectation of u at the horizon by " +
                                           std::to_string(-r.precondition_margin));
  if (r.precondition_margin <= 0.0)
    r.warning = "u_0 does not exceed the upper expectation at the horizon";

  for (std::size_t k = 0; k < s.paths; ++k) {
    if (s.tau[k] < horizon[k]) {
      r.found = true;
      r.path = k;
      r.index = s.tau[k];
      r.time = s.grid.time(r.index);
      r.gap = s.Y(k, r.index) - s.X(k, r.index);
      return r;
    }
  }
  if (r.warning.empty()) r.warning = "no contact before the horizon";
  return r;
}

ViscosityReport martingale_property_test(const AdaptedFunctional& sigma,
                                         const AdaptedFunctional& u, double bound,
                                         MartingaleMode mode,
                                         const std::vector<SamplePoint>& points,
                                         const std::vector<HorizonRule>& rules,
                                         std::size_t count, std::uint64_t seed,
                                         const ConditionalExpectation& estimator) {
  u.require_scalar("u");
  const bool p_mode = mode == MartingaleMode::p_sub || mode == MartingaleMode::p_super;
  const bool sub = mode == MartingaleMode::p_sub || mode == MartingaleMode::e_sub;
  const double level = p_mode ? 0.0 : bound;
  ViscosityReport report;
  for (std::size_t p = 0; p < points.size(); ++p) {
    const auto& point = points[p];
    check_point(point);
    const std::size_t i = point.index;
    const auto ensemble = conditional_ensemble(sigma, i, point.path, count, mix(seed, p));
    const double u_i = value_at(u, i, point.path);
    for (std::size_t q = 0; q < rules.size(); ++q) {
      const auto rule = StoppingRule::localizing(ensemble, i, rules[q].max_steps, rules[q].radius);
      const auto e = nonlinear_expectation(u, rule, level, Side::upper, ensemble, estimator, i);
      CheckResult c;
      c.name = to_string(mode);
      c.point = p;
      c.index = i;
      c.time = point.path.grid().time(i);
      c.state = state_of(point.path, i);
      c.margin = e.y0 - u_i;
      c.std_error = e.std_error;
      const bool ok = sub ? c.margin >= -3.0 * c.std_error : c.margin <= 3.0 * c.std_error;
      c.verdict = ok ? Verdict::pass : Verdict::fail;
      c.detail = "rule " + std::to_string(q) + ": steps " + std::to_string(rules[q].max_steps);
      report.checks.push_back(std::move(c));
    }
  }
  return report;
}

AdaptedFunctional compensated_candidate(const AdaptedFunctional& u, double l0,
                                        const AdaptedFunctional* f0) {
  u.require_scalar("u");
  std::optional<AdaptedFunctional> source;
  if (f0) {
    f0->require_scalar("F0");
    source = *f0;
  }
  return AdaptedFunctional::candidate(
      [u, l0, source](std::size_t i, const PathView& path) {
        const double h = path.grid().spacing();
        double acc = 0.0;
        for (std::size_t j = 0; j < i; ++j) {
          const double f = source ? value_at(*source, j, path) : 0.0;
          acc += h * (l0 * std::abs(value_at(u, j, path)) + f + 1.0);
        }
        return value_at(u, i, path) + acc;
      },
      u.name() + "-compensated");
}

JetEstimate punctual_jet_estimate(const AdaptedFunctional& sigma, const AdaptedFunctional& u,
                                  const SamplePoint& point, std::size_t window,
                                  std::size_t count, std::uint64_t seed,
                                  const ConditionalExpectation& estimator) {
  u.require_scalar("u");
  const std::size_t i = point.index, n = point.path.grid().steps(), d = point.path.dim();
  if (window < 1 || i + window > n) throw ValidationError("window", "need 1 <= w and i + w <= n");
  const auto ens = conditional_ensemble(sigma, i, point.path, count, seed);
  const std::size_t N = ens.size();
  const double h = ens.grid().spacing();

  std::vector<std::vector<double>> values(window + 1, std::vector<double>(N));
  for (std::size_t s = 0; s <= window; ++s)
    for (std::size_t k = 0; k < N; ++k) values[s][k] = value_at(u, i + s, ens.path(k));

  std::vector<double> cont(N), z(N * d);
  std::vector<double> corrected(N, 0.0), step_flow(N);
  std::vector<double> quotients;
  std::vector<std::vector<double>> zbar(window, std::vector<double>(d));
  for (std::size_t s = 0; s < window; ++s) {
    const std::size_t j = i + s;
    const auto projector = estimator.fit(ens, j, {});
    projector->project(values[s + 1], cont);
    estimate_z(*projector, ens, j, values[s + 1], cont, {}, z);
    for (std::size_t k = 0; k < N; ++k) {
      const auto dw = ens.increment(k, j);
      double mart = 0.0;
      for (std::size_t c = 0; c < d; ++c) mart += z[k * d + c] * dw[c];
      step_flow[k] = values[s + 1][k] - values[s][k] - mart;
      corrected[k] += step_flow[k];
    }
    quotients.push_back(detail::weighted_mean_se(step_flow, ens.weights()).first / h);
    for (std::size_t c = 0; c < d; ++c) {
      std::vector<double> comp(N);
      for (std::size_t k = 0; k < N; ++k) comp[k] = z[k * d + c];
      zbar[s][c] = detail::weighted_mean_se(comp, ens.weights()).first;
    }
  }

  JetEstimate jet;
  jet.window = window;
  const double span = ens.grid().time(i + window) - ens.grid().time(i);
  const auto [mean, se] = detail::weighted_mean_se(corrected, ens.weights());
  jet.alpha = mean / span;
  jet.alpha_std_error = se / span;
  jet.alpha_dispersion = stdev(quotients);

  // zeta = sigma^T beta, solved in the least-squares sense when sigma is singular.
  Eigen::VectorXd zeta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  double beta_var = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    std::vector<double> comp(window);
    for (std::size_t s = 0; s < window; ++s) comp[s] = zbar[s][c];
    bool same = std::all_of(comp.begin(), comp.end(), [&](double v) { return v == comp[0]; });
    double m = comp[0];
    if (!same) {
      m = 0.0;
      for (double v : comp) m += v;
      m /= static_cast<double>(window);
    }
    zeta[static_cast<Eigen::Index>(c)] = m;
    const double sd = stdev(comp);
    beta_var += sd * sd;
  }
  jet.beta_dispersion = std::sqrt(beta_var);
  std::vector<double> s(d * d);
  sigma.vector(i, point.path, s);
  Eigen::MatrixXd st(d, d);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b)
      st(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = s[b * d + a];
  const Eigen::VectorXd beta = st.completeOrthogonalDecomposition().solve(zeta);
  jet.beta.assign(beta.data(), beta.data() + d);
  return jet;
}

ViscosityReport comparison_experiment(const AdaptedFunctional& u, const AdaptedFunctional& v,
                                      const AdaptedFunctional* driver,
                                      const AdaptedFunctional& sigma,
                                      const PathEnsemble& ensemble,
                                      const ConditionalExpectation& estimator,
                                      ComparisonPlan plan) {
  u.require_scalar("u");
  v.require_scalar("v");
  const std::size_t n = ensemble.steps();
  const std::size_t sample = std::min(plan.sample_paths, ensemble.size());

  for (std::size_t k = 0; k < sample; ++k) {
    const double ut = value_at(u, n, ensemble.path(k)), vt = value_at(v, n, ensemble.path(k));
    if (ut > vt)
      throw ValidationError("terminal", "u_T > v_T on path " + std::to_string(k) + " (u_T = " +
                                            std::to_string(ut) + ", v_T = " + std::to_string(vt) +
                                            ")");
  }

  // Terminal-role sides are solved as BSDEs on the whole ensemble.
  struct Side {
    std::optional<BsdeSolution> solution;
    const AdaptedFunctional* closed = nullptr;
  };
  const auto prepare = [&](const AdaptedFunctional& f) {
    Side s;
    if (f.role() == Role::terminal) {
      if (!driver) throw ValidationError("driver", "a driver is required for payoff candidates");
      s.solution = solve_bsde(*driver, f, ensemble, estimator);
    } else {
      s.closed = &f;
    }
    return s;
  };
  const Side su = prepare(u), sv = prepare(v);
  const auto eval = [&](const Side& s, std::size_t k, std::size_t i) {
    return s.solution ? s.solution->Y(k, i) : s.closed->scalar(i, ensemble.path(k));
  };
  const double se = std::hypot(su.solution ? su.solution->std_error : 0.0,
                               sv.solution ? sv.solution->std_error : 0.0);

  ViscosityReport report;
  for (std::size_t k = 0; k < sample; ++k) {
    for (std::size_t i = 0; i <= n; ++i) {
      CheckResult c;
      c.name = "comparison";
      c.point = k;
      c.index = i;
      c.time = ensemble.grid().time(i);
      c.state = state_of(ensemble.path(k), i);
      c.margin = eval(sv, k, i) - eval(su, k, i);
      c.std_error = se;
      c.verdict = c.margin >= -3.0 * se ? Verdict::pass : Verdict::fail;
      report.checks.push_back(std::move(c));
    }
  }

  if (plan.difference) {
    if (!su.closed || !sv.closed)
      throw ValidationError("compare", "difference mode needs closed-form candidates");
    const auto w = AdaptedFunctional::candidate(
        [&](std::size_t i, const PathView& path) { return u.scalar(i, path) - v.scalar(i, path); },
        "difference");
    if (plan.jet_window >= n) throw ValidationError("window", "jet window exceeds the grid");
    const std::size_t d = ensemble.dim();
    for (std::size_t k = 0; k < sample; ++k) {
      const std::size_t i = (k + 1) * (n - plan.jet_window) / (sample + 1);
      const auto path = ensemble.path(k);
      SamplePoint point{i, DiscretePath(ensemble.grid(), d,
                                        {path.values().begin(), path.values().end()})};
      const auto jet = punctual_jet_estimate(sigma, w, point, plan.jet_window, plan.jet_paths,
                                             mix(plan.seed, k), estimator);
      std::vector<double> s(d * d);
      sigma.vector(i, path, s);
      double grad = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        double acc = 0.0;
        for (std::size_t b = 0; b < d; ++b) acc += s[b * d + a] * jet.beta[b];
        grad += acc * acc;
      }
      const double residual =
          -jet.alpha - plan.bound * std::abs(w.scalar(i, path)) - plan.bound * std::sqrt(grad);
      CheckResult c;
      c.name = "difference-residual";
      c.point = k;
      c.index = i;
      c.time = ensemble.grid().time(i);
      c.state = state_of(path, i);
      c.margin = -residual;
      c.std_error = jet.alpha_std_error;
      c.verdict = c.margin >= -(3.0 * c.std_error + 1e-6) ? Verdict::pass : Verdict::fail;
      c.detail = "alpha dispersion " + std::to_string(jet.alpha_dispersion);
      report.checks.push_back(std::move(c));
    }
  }
  return report;
}

}  // namespace ppde
