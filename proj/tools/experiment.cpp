#include "experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>

#include "ppde/bsde.hpp"
#include "ppde/ensemble_io.hpp"
#include "ppde/errors.hpp"
#include "ppde/sde.hpp"
#include "ppde/snell.hpp"
#include "ppde/viscosity.hpp"

namespace ppde::cli {
namespace {

using Clock = std::chrono::steady_clock;

TimeGrid make_grid(const ExperimentConfig& c) { return TimeGrid(c.grid.T, c.grid.n); }

std::unique_ptr<ConditionalExpectation> make_estimator(const ExperimentConfig& c) {
  if (c.solver.estimator == "tree") return std::make_unique<TreeEstimator>();
  return std::make_unique<RegressionEstimator>(make_basis(c));
}

AdaptedFunctional constant_control(const ExperimentConfig& c) {
  const std::size_t d = c.model.d;
  const double lambda = c.expectation.lambda;
  return AdaptedFunctional::control(
      d, std::abs(lambda),
      [lambda](std::size_t, const PathView&, std::span<double> out) {
        std::fill(out.begin(), out.end(), lambda);
      },
      "constant-drift");
}

PathEnsemble make_ensemble(const ExperimentConfig& c) {
  if (c.solver.estimator == "tree") {
    if (c.model.sigma != "identity")
      throw ValidationError("model.sigma", "tree mode needs the identity volatility");
    return tree_ensemble(c.grid.n, c.grid.T / static_cast<double>(c.grid.n));
  }
  const auto sigma = make_sigma(c);
  return simulate_base(sigma, make_grid(c), c.solver.N, c.model.d, c.solver.seed);
}

std::filesystem::path prepare_dir(const ExperimentConfig& c) {
  std::filesystem::path dir(c.output.dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ValidationError("output.dir", "cannot create " + dir.string());
  return dir;
}

void write_paths_csv(const PathEnsemble& e, const std::filesystem::path& file, std::size_t limit) {
  std::ofstream out(file);
  if (!out) throw ValidationError("output.dir", "cannot write " + file.string());
  out.precision(17);
  out << "path,index,t";
  for (std::size_t c = 0; c < e.dim(); ++c) out << ",omega" << c;
  out << ",weight\n";
  for (std::size_t k = 0; k < std::min(limit, e.size()); ++k) {
    const auto p = e.path(k);
    for (std::size_t i = 0; i <= e.steps(); ++i) {
      out << k << ',' << i << ',' << e.grid().time(i);
      for (std::size_t c = 0; c < e.dim(); ++c) out << ',' << p(i, c);
      out << ',' << e.weight(k) << '\n';
    }
  }
}

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

// The scalar estimate of an experiment, shared by the subcommands and the
// convergence study.
Estimate headline(const ExperimentConfig& c, const std::string& experiment,
                  nlohmann::json* result, const std::filesystem::path* csv) {
  const auto estimator = make_estimator(c);
  const auto ensemble = make_ensemble(c);
  const std::size_t limit = c.output.csv_paths;
  if (experiment == "expectation") {
    const auto terminal = make_terminal(c);
    const Side side = c.expectation.side == "upper" ? Side::upper : Side::lower;
    BsdeSolution s;
    if (c.expectation.mode == "nonlinear") {
      s = nonlinear_expectation(terminal, c.model.L, side, ensemble, *estimator);
    } else if (c.expectation.mode == "drifted") {
      const auto drifted = simulate_drifted(make_sigma(c), constant_control(c), make_grid(c),
                                            c.solver.N, c.model.d, c.solver.seed);
      s = nonlinear_expectation(terminal, 0.0, Side::upper, drifted, *estimator);
    } else {
      const auto weighted = ensemble.with_weights(girsanov_weights(constant_control(c), ensemble));
      s = nonlinear_expectation(terminal, 0.0, Side::upper, weighted, *estimator);
    }
    if (result) {
      *result = summary(s, *estimator);
      (*result)["side"] = c.expectation.side;
      (*result)["mode"] = c.expectation.mode;
      (*result)["L"] = c.model.L;
    }
    if (csv) write_csv(s, *csv, limit);
    return {s.y0, s.std_error};
  }
  if (experiment == "bsde") {
    const auto s = solve_bsde(make_driver(c), make_terminal(c), ensemble, *estimator);
    if (result) {
      *result = summary(s, *estimator);
      (*result)["driver"] = c.driver.name;
    }
    if (csv) write_csv(s, *csv, limit);
    return {s.y0, s.std_error};
  }
  // snell
  const auto obstacle = make_process(c);
  SnellOptions options;
  options.tol_contact = c.solver.tol_contact;
  const auto s = snell_envelope(obstacle, c.model.L, StoppingRule::fixed(ensemble.size(), c.grid.n),
                                ensemble, *estimator, options);
  if (result) {
    *result = summary(s, ensemble);
    const auto again =
        nonlinear_expectation(obstacle, s.tau, c.model.L, Side::upper, ensemble, *estimator);
    (*result)["reevaluated"] = {{"value", again.y0}, {"std_error", again.std_error}};
    (*result)["basis"] = estimator->describe();
  }
  if (csv) write_csv(s, *csv, limit);
  return {s.value, s.std_error};
}

nlohmann::json simulate(const ExperimentConfig& c, const std::filesystem::path& dir) {
  PathEnsemble ensemble = make_ensemble(c);
  if (c.expectation.mode == "drifted")
    ensemble = simulate_drifted(make_sigma(c), constant_control(c), make_grid(c), c.solver.N,
                                c.model.d, c.solver.seed);
  else if (c.expectation.mode == "girsanov")
    ensemble = ensemble.with_weights(girsanov_weights(constant_control(c), ensemble));
  const auto terminal = make_terminal(c);
  std::vector<double> x(ensemble.size());
  double sw = 0.0, sx = 0.0;
  for (std::size_t k = 0; k < ensemble.size(); ++k) {
    x[k] = terminal.terminal_value(ensemble.path(k));
    sw += ensemble.weight(k);
    sx += ensemble.weight(k) * x[k];
  }
  // Identical payoffs are reported exactly, with no summation round-off.
  const bool constant = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; });
  const double mean = constant ? x[0] : sx / sw;
  double acc = 0.0;
  for (std::size_t k = 0; k < ensemble.size() && !constant; ++k)
    acc += ensemble.weight(k) * ensemble.weight(k) * (x[k] - mean) * (x[k] - mean);
  if (!std::isfinite(mean) || !std::isfinite(acc))
    throw NumericalError("non-finite payoff statistics");
  if (c.output.csv) write_paths_csv(ensemble, dir / "simulate.csv", c.output.csv_paths);
  if (c.output.ensemble) write_ensemble(ensemble, dir / "ensemble");
  return {{"ensemble", ensemble_metadata(ensemble)},
          {"payoff_mean", mean},
          {"std_error", std::sqrt(acc) / sw}};
}

nlohmann::json viscosity(const ExperimentConfig& c, const std::filesystem::path& dir) {
  const auto estimator = make_estimator(c);
  const auto sigma = make_sigma(c);
  const auto u = make_process(c);
  const auto& v = c.viscosity;
  const TimeGrid grid = make_grid(c);
  nlohmann::json result;
  ViscosityReport report;

  if (v.check == "tangency") {
    const auto ensemble = make_ensemble(c);
    const auto t = tangency_point(u, c.model.L, StoppingRule::fixed(ensemble.size(), c.grid.n),
                                  ensemble, *estimator, c.solver.tol_contact);
    result = {{"found", t.found},
              {"path", t.path},
              {"index", t.index},
              {"t", t.time},
              {"gap", t.gap},
              {"precondition_margin", t.precondition_margin},
              {"precondition_std_error", t.precondition_std_error},
              {"warning", t.warning}};
    return result;
  }

  const auto points =
      sample_points(sigma, grid, c.model.d, v.points, c.solver.seed ^ 0x5A5A5A5AULL, v.lo, v.hi);
  if (v.check == "martingale") {
    std::vector<HorizonRule> rules;
    for (std::size_t m : v.horizon_steps) rules.push_back({m, v.radius});
    const MartingaleMode mode = v.mode == "p_sub"     ? MartingaleMode::p_sub
                                : v.mode == "p_super" ? MartingaleMode::p_super
                                : v.mode == "e_sub"   ? MartingaleMode::e_sub
                                                      : MartingaleMode::e_super;
    report = martingale_property_test(sigma, u, c.model.L, mode, points, rules, c.solver.N,
                                      c.solver.seed, *estimator);
  } else if (v.check == "gap") {
    const TestJet jet{v.alpha, v.beta};
    const JetSide side = v.side == "sub" ? JetSide::sub : JetSide::super;
    for (std::size_t p = 0; p < points.size(); ++p) {
      const auto g = test_process_gap(sigma, u, jet, c.model.L, points[p],
                                      {v.horizon_steps.front(), v.radius}, side, c.solver.N,
                                      c.solver.seed + p, *estimator);
      CheckResult r;
      r.name = "gap-" + v.side;
      r.point = p;
      r.index = points[p].index;
      r.time = grid.time(r.index);
      const auto s = points[p].path.view().point(r.index);
      r.state.assign(s.begin(), s.end());
      r.margin = g.gap;
      r.std_error = g.std_error;
      r.verdict = g.member ? Verdict::pass : Verdict::fail;
      report.checks.push_back(std::move(r));
    }
  } else {
    nlohmann::json jets = nlohmann::json::array();
    for (std::size_t p = 0; p < points.size(); ++p) {
      const auto j = punctual_jet_estimate(sigma, u, points[p], v.window, c.solver.N,
                                           c.solver.seed + p, *estimator);
      const auto s = points[p].path.view().point(points[p].index);
      jets.push_back({{"point", p},
                      {"index", points[p].index},
                      {"state", std::vector<double>(s.begin(), s.end())},
                      {"alpha", j.alpha},
                      {"alpha_std_error", j.alpha_std_error},
                      {"beta", j.beta},
                      {"alpha_dispersion", j.alpha_dispersion},
                      {"beta_dispersion", j.beta_dispersion}});
    }
    return {{"jets", jets}};
  }
  if (c.output.csv) report.write_csv(dir / "viscosity-check.csv");
  return report.to_json();
}

nlohmann::json compare(const ExperimentConfig& c, const std::filesystem::path& dir) {
  const auto estimator = make_estimator(c);
  const auto ensemble = make_ensemble(c);
  const auto driver = make_driver(c);
  const bool bsde = c.compare.mode == "bsde";
  const auto u = bsde ? make_terminal(c) : make_process(c);
  const auto v = bsde ? make_terminal(c, c.compare.offset) : make_process(c, c.compare.offset);
  ComparisonPlan plan;
  plan.sample_paths = c.compare.sample_paths;
  plan.difference = c.compare.difference;
  plan.bound = c.model.L;
  plan.jet_window = c.viscosity.window;
  plan.jet_paths = c.compare.jet_paths;
  plan.seed = c.solver.seed;
  const auto report =
      comparison_experiment(u, v, &driver, make_sigma(c), ensemble, *estimator, plan);
  if (c.output.csv) report.write_csv(dir / "compare.csv");
  return report.to_json();
}

}  // namespace

nlohmann::json ResultTable::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : rows_) {
    nlohmann::json j{{"experiment", r.experiment}, {"estimate", r.estimate},
                     {"std_error", r.std_error},   {"N", r.N},
                     {"n", r.n},                   {"seed", r.seed}};
    if (r.runtime_ms) j["runtime_ms"] = *r.runtime_ms;
    if (r.abs_error) j["abs_error"] = *r.abs_error;
    rows.push_back(std::move(j));
  }
  return rows;
}

void ResultTable::write_csv(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw ValidationError("output.dir", "cannot write " + file.string());
  out.precision(17);
  out << "experiment,estimate,std_error,N,n,seed,runtime_ms,abs_error\n";
  for (const auto& r : rows_) {
    out << r.experiment << ',' << r.estimate << ',' << r.std_error << ',' << r.N << ',' << r.n
        << ',' << r.seed << ',';
    if (r.runtime_ms) out << *r.runtime_ms;
    out << ',';
    if (r.abs_error) out << *r.abs_error;
    out << '\n';
  }
}

nlohmann::json run_experiment(const ExperimentConfig& config, const std::string& command) {
  const auto dir = prepare_dir(config);
  const auto start = Clock::now();
  nlohmann::json result;
  if (command == "simulate") {
    result = simulate(config, dir);
  } else if (command == "expectation" || command == "bsde" || command == "snell") {
    const std::filesystem::path csv = dir / (command + ".csv");
    headline(config, command, &result, config.output.csv ? &csv : nullptr);
  } else if (command == "viscosity-check") {
    result = viscosity(config, dir);
  } else if (command == "compare") {
    result = compare(config, dir);
  } else if (command == "converge") {
    std::vector<std::pair<std::size_t, std::size_t>> levels;
    if (config.converge.N.size() != config.converge.n.size())
      throw ValidationError("converge.N", "N and n lists must have equal length");
    for (std::size_t q = 0; q < config.converge.N.size(); ++q)
      levels.emplace_back(config.converge.N[q], config.converge.n[q]);
    const auto table = convergence_study(config, levels);
    if (config.output.csv) table.write_csv(dir / "converge.csv");
    result = {{"rows", table.to_json()}};
  } else {
    throw ValidationError("command", "unknown subcommand '" + command + "'");
  }
  if (config.output.timing)
    result["runtime_ms"] = std::chrono::duration<double, std::milli>(Clock::now() - start).count();

  nlohmann::json summary{{"command", command}, {"config", to_json(config)}, {"result", result}};
  std::ofstream out(dir / (command + ".json"));
  if (!out) throw ValidationError("output.dir", "cannot write the summary");
  out << summary.dump(2) << '\n';
  return summary;
}

ResultTable convergence_study(const ExperimentConfig& config,
                              const std::vector<std::pair<std::size_t, std::size_t>>& levels) {
  if (levels.size() < 2)
    throw ValidationError("converge.levels", "a convergence study needs at least two levels");
  ResultTable table;
  for (const auto& [N, n] : levels) {
    ExperimentConfig level = config;
    level.solver.N = N;
    level.grid.n = n;
    level.viscosity.hi = 0;
    level.viscosity.horizon_steps.clear();
    resolve(level);
    const auto start = Clock::now();
    const Estimate e = headline(level, config.converge.experiment, nullptr, nullptr);
    ResultRow row;
    row.experiment = config.converge.experiment;
    row.estimate = e.value;
    row.std_error = e.std_error;
    row.N = level.solver.N;
    row.n = n;
    row.seed = level.solver.seed;
    if (config.output.timing)
      row.runtime_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    if (config.converge.target) row.abs_error = std::abs(e.value - *config.converge.target);
    table.append(std::move(row));
  }
  return table;
}

}  // namespace ppde::cli
