#pragma once

// Config-driven experiment runner behind the command-line tool.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppde/paths.hpp"
#include "ppde/regression.hpp"

namespace ppde::cli {

struct GridConfig {
  double T = 1.0;
  std::size_t n = 100;
};

struct ModelConfig {
  std::string sigma = "identity";  // identity | constant | tanh
  double sigma_value = 1.0;        // constant: sigma_value * I unless sigma_matrix is given
  std::vector<double> sigma_matrix;
  double sigma_c = 0.5;  // tanh: (1 + c tanh(|omega_t|)) I
  std::size_t d = 1;
  double L = 0.0;
  double L0 = 0.0;
};

struct DriverConfig {
  std::string name = "zero";  // zero | constant | linear | absolute | trig
  double c = 0.0;
  double a = 0.0;
  double b = 0.0;
  double L = 0.0;
};

struct PayoffConfig {
  std::string name = "linear";  // linear | square | running_max | average | sine | time_quadratic | zero
  std::vector<double> direction;
  double scale = 1.0;
  double offset = 0.0;
  double time_coef = 0.0;
  double center = 0.5;
};

struct SolverConfig {
  std::size_t N = 10000;
  std::uint64_t seed = 1;
  int degree = 3;
  double ridge = 1e-8;
  bool running_max = true;
  bool running_integral = true;
  double tol_contact = 1e-9;
  std::string estimator = "regression";  // regression | tree
};

struct OutputConfig {
  std::string dir = "out";
  bool csv = true;
  std::size_t csv_paths = 64;
  bool timing = false;
  bool ensemble = false;
};

struct ExpectationConfig {
  std::string side = "upper";       // upper | lower
  std::string mode = "nonlinear";   // nonlinear | drifted | girsanov
  double lambda = 0.0;              // constant drift for drifted/girsanov
};

struct ViscosityConfig {
  std::string check = "martingale";  // martingale | gap | jet | tangency
  std::string mode = "p_sub";        // p_sub | p_super | e_sub | e_super
  std::size_t points = 20;
  std::vector<std::size_t> horizon_steps;
  double radius = 1.0;
  std::size_t window = 5;
  std::size_t lo = 1;
  std::size_t hi = 0;  // 0: resolved to n - 1
  double alpha = 0.0;
  std::vector<double> beta;
  std::string side = "sub";
};

struct CompareConfig {
  std::string mode = "bsde";  // bsde | candidates
  double offset = 0.5;
  std::size_t sample_paths = 20;
  bool difference = false;
  std::size_t jet_paths = 2000;
};

struct ConvergeConfig {
  std::string experiment = "expectation";  // expectation | bsde | snell
  std::vector<std::size_t> N;
  std::vector<std::size_t> n;
  std::optional<double> target;
};

struct ExperimentConfig {
  GridConfig grid;
  ModelConfig model;
  DriverConfig driver;
  PayoffConfig payoff;
  SolverConfig solver;
  OutputConfig output;
  ExpectationConfig expectation;
  ViscosityConfig viscosity;
  CompareConfig compare;
  ConvergeConfig converge;
};

/// Parses sectioned key = value text. Strings may be quoted, arrays are
/// written [a, b, c]. Unknown sections or keys are rejected.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& file);

/// Checks ranges and names and fills name-dependent defaults.
void resolve(ExperimentConfig& config);

/// Every setting that influences numeric output (not the output directory).
nlohmann::json to_json(const ExperimentConfig& config);

// Built-in model library.
AdaptedFunctional make_sigma(const ExperimentConfig& config);
AdaptedFunctional make_driver(const ExperimentConfig& config);
/// Payoff as a process in (i, omega); its value at index n is the terminal payoff.
AdaptedFunctional make_process(const ExperimentConfig& config, double extra_offset = 0.0);
AdaptedFunctional make_terminal(const ExperimentConfig& config, double extra_offset = 0.0);
RegressionBasis make_basis(const ExperimentConfig& config);

struct ResultRow {
  std::string experiment;
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t N = 0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::optional<double> runtime_ms;
  std::optional<double> abs_error;
};

/// Append-only table of experiment results.
class ResultTable {
 public:
  void append(ResultRow row) { rows_.push_back(std::move(row)); }
  const std::vector<ResultRow>& rows() const noexcept { return rows_; }
  nlohmann::json to_json() const;
  void write_csv(const std::filesystem::path& file) const;

 private:
  std::vector<ResultRow> rows_;
};

/// Runs one subcommand (simulate | expectation | bsde | snell | viscosity-check
/// | compare) and writes `<command>.json` and, if enabled, `<command>.csv` into
/// the output directory. Returns the summary.
nlohmann::json run_experiment(const ExperimentConfig& config, const std::string& command);

/// One row per (N, n) level; absolute errors when a target is known.
ResultTable convergence_study(const ExperimentConfig& config,
                              const std::vector<std::pair<std::size_t, std::size_t>>& levels);

}  // namespace ppde::cli
