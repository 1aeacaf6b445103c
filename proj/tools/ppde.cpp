// Command-line front end: ppde <subcommand> --config FILE [--seed S] [--out DIR] [--threads K]

#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "experiment.hpp"
#include "ppde/errors.hpp"
#include "ppde/parallel.hpp"

namespace {

int report_error(const std::string& kind, const std::string& message, nlohmann::json extra,
                 const std::string& dir, int code) {
  nlohmann::json err{{"error", {{"kind", kind}, {"message", message}}}};
  for (auto& [k, v] : extra.items()) err["error"][k] = v;
  std::cerr << err.dump() << '\n';
  if (!dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::ofstream out(std::filesystem::path(dir) / "error.json");
    if (out) out << err.dump(2) << '\n';
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Path-dependent PDE laboratory: BSDEs, nonlinear expectations, Snell envelopes"};
  app.require_subcommand(1);

  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::size_t threads = 1;
  const char* commands[][2] = {
      {"simulate", "Simulate a path ensemble"},
      {"expectation", "Nonlinear (or drifted / reweighted) expectation of the payoff"},
      {"bsde", "Solve the BSDE with the configured driver and payoff"},
      {"snell", "Snell envelope of the payoff process"},
      {"viscosity-check", "Martingale, jet-membership, jet-estimation or tangency checks"},
      {"compare", "Comparison experiment between two candidates or payoffs"},
      {"converge", "Convergence study over (N, n) levels"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_file, "Experiment config file")->required();
    sub->add_option("--seed", seed, "Override [solver] seed");
    sub->add_option("--out", out_dir, "Override [output] dir");
    sub->add_option("--threads", threads, "Worker threads (results do not depend on it)")
        ->check(CLI::PositiveNumber);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // bad flags count as validation failures
  }
  const std::string command = app.get_subcommands().front()->get_name();

  std::string dir = out_dir.value_or("");
  try {
    auto config = ppde::cli::load_config(config_file);
    if (seed) config.solver.seed = *seed;
    if (out_dir) config.output.dir = *out_dir;
    dir = config.output.dir;
    ppde::set_thread_count(threads);
    const auto summary = ppde::cli::run_experiment(config, command);
    std::cout << summary["result"].dump(2) << '\n';
    return 0;
  } catch (const ppde::ValidationError& e) {
    return report_error("validation", e.what(), {{"field", e.field()}}, dir, 2);
  } catch (const ppde::NumericalError& e) {
    nlohmann::json where;
    if (e.path() != ppde::NumericalError::npos) where["path"] = e.path();
    if (e.step() != ppde::NumericalError::npos) where["step"] = e.step();
    return report_error("numerical", e.what(), where, dir, 3);
  } catch (const std::exception& e) {
    return report_error("numerical", e.what(), nlohmann::json::object(), dir, 3);
  }
}
