#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "experiment.hpp"
#include "ppde/errors.hpp"
#include "ppde/parallel.hpp"

namespace fs = std::filesystem;
using namespace ppde;
using namespace ppde::cli;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("ppde_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string field_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ValidationError& e) {
    return e.field();
  }
  return "<accepted>";
}

const char* kHeat = R"(
[grid]
T = 1.0
n = 50
[model]
sigma = "identity"
[driver]
name = "zero"
[payoff]
name = "square"
[solver]
N = 20000
seed = 7
)";

// sigma = 0: every path stays at the origin.
const char* kFrozen = R"(
[grid]
n = 20
[model]
sigma = "constant"
sigma_value = 0.0
[driver]
name = "zero"
[payoff]
name = "linear"
offset = 0.7   # terminal value 0.7 on every path
[solver]
N = 500
)";

ExperimentConfig with_dir(const char* text, const fs::path& dir) {
  auto c = parse_config(text);
  c.output.dir = dir.string();
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PPDE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, ParsesSectionsArraysAndComments) {
  const auto c = parse_config(R"(
# leading comment
[grid]
T = 2.5
n = 40
[model]
d = 2
sigma = "constant"
sigma_matrix = [1.0, 0.0, 0.3, 2.0]
L = 0.25
[driver]
name = 'trig'
[payoff]
name = "linear"
direction = [0.0, 1.0]
[viscosity]
horizon_steps = [5, 10]
radius = inf
)");
  EXPECT_DOUBLE_EQ(c.grid.T, 2.5);
  EXPECT_EQ(c.grid.n, 40u);
  EXPECT_EQ(c.model.d, 2u);
  EXPECT_EQ(c.model.sigma_matrix, (std::vector<double>{1.0, 0.0, 0.3, 2.0}));
  EXPECT_EQ(c.driver.name, "trig");
  // name-dependent defaults are filled in
  EXPECT_DOUBLE_EQ(c.driver.a, 0.5);
  EXPECT_DOUBLE_EQ(c.driver.b, 0.3);
  EXPECT_DOUBLE_EQ(c.driver.L, 0.25);
  EXPECT_EQ(c.payoff.direction, (std::vector<double>{0.0, 1.0}));
  EXPECT_EQ(c.viscosity.horizon_steps, (std::vector<std::size_t>{5, 10}));
  EXPECT_TRUE(std::isinf(c.viscosity.radius));
}

TEST(Config, ValidationNamesTheField) {
  EXPECT_EQ(field_of("[grid]\nn = 0\n"), "grid.n");
  EXPECT_EQ(field_of("[grid]\nT = -1\n"), "grid.T");
  EXPECT_EQ(field_of("[solver]\nN = 0\n"), "solver.N");
  EXPECT_EQ(field_of("[model]\nL = -0.1\n"), "model.L");
  EXPECT_EQ(field_of("[grid]\nsteps = 5\n"), "grid.steps");
  EXPECT_EQ(field_of("[gird]\nn = 5\n"), "gird");
  EXPECT_EQ(field_of("[driver]\nname = \"quartic\"\n"), "driver.name");
  EXPECT_EQ(field_of("[payoff]\nname = \"digital\"\n"), "payoff.name");
  EXPECT_EQ(field_of("[model]\nsigma = \"heston\"\n"), "model.sigma");
  EXPECT_EQ(field_of("[grid]\nn = ten\n"), "grid.n");
  EXPECT_EQ(field_of("[payoff]\ndirection = [1, 0]\n"), "payoff.direction");
  EXPECT_EQ(field_of("[output]\ncsv = maybe\n"), "output.csv");
  EXPECT_EQ(field_of("[grid]\nn = 10\n"), "<accepted>");
}

TEST(Config, ResolvedJsonOmitsOnlyTheOutputDirectory) {
  auto c = parse_config(kHeat);
  c.output.dir = "/somewhere/else";
  const auto j = to_json(c);
  for (const char* s : {"grid", "model", "driver", "payoff", "solver", "output", "expectation",
                        "viscosity", "compare", "converge"})
    EXPECT_TRUE(j.contains(s)) << s;
  EXPECT_FALSE(j["output"].contains("dir"));
  EXPECT_EQ(j.dump().find("somewhere"), std::string::npos);
  EXPECT_EQ(j["solver"]["seed"], 7u);
  EXPECT_EQ(j["viscosity"]["hi"], 49u);  // resolved, not left at 0
}

TEST(RunExperiment, HeatEquationGivesOne) {
  const auto dir = scratch("heat");
  const auto summary = run_experiment(with_dir(kHeat, dir), "bsde");
  const double y0 = summary["result"]["Y0"];
  const double se = summary["result"]["std_error"];
  // E[B_1^2] = 1
  EXPECT_NEAR(y0, 1.0, 4.0 * se);
  EXPECT_LT(se, 0.02);
  EXPECT_TRUE(fs::exists(dir / "bsde.json"));
  EXPECT_TRUE(fs::exists(dir / "bsde.csv"));
  const auto on_disk = nlohmann::json::parse(slurp(dir / "bsde.json"));
  EXPECT_EQ(on_disk["config"], to_json(parse_config(kHeat)));
  EXPECT_FALSE(on_disk["result"].contains("runtime_ms"));
}

TEST(RunExperiment, FrozenModelIsExact) {
  const auto dir = scratch("frozen");
  const auto c = with_dir(kFrozen, dir);
  for (const char* cmd : {"bsde", "expectation", "snell"}) {
    const auto r = run_experiment(c, cmd)["result"];
    const double value = r.contains("Y0") ? r["Y0"].get<double>() : r["V0"].get<double>();
    EXPECT_EQ(value, 0.7) << cmd;
    EXPECT_EQ(r["std_error"].get<double>(), 0.0) << cmd;
  }
  const auto sim = run_experiment(c, "simulate")["result"];
  EXPECT_EQ(sim["payoff_mean"].get<double>(), 0.7);
  EXPECT_EQ(sim["std_error"].get<double>(), 0.0);
}

TEST(RunExperiment, TimingIsOptIn) {
  const auto dir = scratch("timing");
  auto c = with_dir(kFrozen, dir);
  c.output.timing = true;
  EXPECT_TRUE(run_experiment(c, "bsde")["result"].contains("runtime_ms"));
}

TEST(RunExperiment, SimulateCsvRespectsThePathLimit) {
  const auto dir = scratch("simulate");
  auto c = with_dir(kHeat, dir);
  c.solver.N = 100;
  c.output.csv_paths = 3;
  run_experiment(c, "simulate");
  std::ifstream in(dir / "simulate.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "path,index,t,omega0,weight");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3u * (c.grid.n + 1));
}

TEST(RunExperiment, EverySubcommandRuns) {
  const auto dir = scratch("smoke");
  auto c = with_dir(kHeat, dir);
  c.grid.n = 20;
  c.solver.N = 2000;
  c.viscosity.points = 2;
  c.viscosity.hi = 0;
  c.viscosity.horizon_steps.clear();
  c.converge.N = {1000, 2000};
  c.converge.n = {10, 20};
  resolve(c);
  for (const char* cmd : {"simulate", "expectation", "bsde", "snell", "compare", "converge"}) {
    EXPECT_NO_THROW(run_experiment(c, cmd)) << cmd;
    EXPECT_TRUE(fs::exists(dir / (std::string(cmd) + ".json"))) << cmd;
  }
  for (const char* check : {"martingale", "gap", "jet"}) {
    auto v = c;
    v.viscosity.check = check;
    v.viscosity.hi = 0;
    resolve(v);
    EXPECT_NO_THROW(run_experiment(v, "viscosity-check")) << check;
  }
  auto t = c;
  t.payoff.name = "time_quadratic";
  t.payoff.center = 0.45;
  t.viscosity.check = "tangency";
  const auto r = run_experiment(t, "viscosity-check")["result"];
  EXPECT_TRUE(r["found"].get<bool>());
  EXPECT_EQ(r["index"].get<std::size_t>(), 9u);  // 0.45 on a 20-step grid
  EXPECT_THROW(run_experiment(c, "plot"), ValidationError);
}

TEST(RunExperiment, ThreadCountDoesNotChangeOutputs) {
  auto c = parse_config(kHeat);
  c.grid.n = 20;
  c.solver.N = 3000;
  c.model.L = 0.5;
  std::string reference;
  for (std::size_t threads : {1, 3}) {
    const auto dir = scratch("threads" + std::to_string(threads));
    c.output.dir = dir.string();
    set_thread_count(threads);
    run_experiment(c, "expectation");
    const std::string bytes = slurp(dir / "expectation.json") + slurp(dir / "expectation.csv");
    if (reference.empty()) reference = bytes;
    else EXPECT_EQ(bytes, reference);
  }
  set_thread_count(1);
}

TEST(Convergence, SingleLevelIsRejected) {
  const auto c = parse_config(kFrozen);
  EXPECT_THROW(convergence_study(c, {{100, 10}}), ValidationError);
  EXPECT_THROW(convergence_study(c, {}), ValidationError);
}

TEST(Convergence, DeterministicExperimentIsIdenticalAcrossLevels) {
  auto c = parse_config(kFrozen);
  c.converge.experiment = "bsde";
  c.converge.target = 0.7;
  const auto table = convergence_study(c, {{50, 5}, {100, 10}, {400, 40}});
  ASSERT_EQ(table.rows().size(), 3u);
  for (const auto& row : table.rows()) {
    EXPECT_EQ(row.estimate, 0.7);
    EXPECT_EQ(row.std_error, 0.0);
    ASSERT_TRUE(row.abs_error.has_value());
    EXPECT_EQ(*row.abs_error, 0.0);
    EXPECT_FALSE(row.runtime_ms.has_value());
  }
  EXPECT_EQ(table.rows()[2].N, 400u);
  EXPECT_EQ(table.rows()[2].n, 40u);
}

TEST(Convergence, UpperExpectationErrorsShrinkWithRefinement) {
  auto c = parse_config(kHeat);
  c.payoff.name = "linear";
  c.model.L = 0.5;
  c.converge.experiment = "expectation";
  c.converge.target = 0.5;  // L * T
  const auto table = convergence_study(c, {{20000, 25}, {20000, 50}, {20000, 100}});
  const auto& rows = table.rows();
  for (std::size_t q = 1; q < rows.size(); ++q) {
    const double slack = 2.0 * std::max(rows[q].std_error, rows[q - 1].std_error);
    EXPECT_LE(*rows[q].abs_error, *rows[q - 1].abs_error + slack) << q;
  }
}

TEST(ResultTable, CsvLeavesMissingColumnsEmpty) {
  ResultTable t;
  t.append({"bsde", 1.5, 0.25, 10, 5, 3, std::nullopt, 0.5});
  t.append({"snell", 2.0, 0.0, 20, 5, 3, 12.0, std::nullopt});
  const auto dir = scratch("table");
  t.write_csv(dir / "t.csv");
  EXPECT_EQ(slurp(dir / "t.csv"),
            "experiment,estimate,std_error,N,n,seed,runtime_ms,abs_error\n"
            "bsde,1.5,0.25,10,5,3,,0.5\n"
            "snell,2,0,20,5,3,12,\n");
  const auto j = t.to_json();
  EXPECT_FALSE(j[0].contains("runtime_ms"));
  EXPECT_EQ(j[1]["runtime_ms"], 12.0);
}

TEST(Binary, ExitCodes) {
  const auto dir = scratch("binary");
  const auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream(dir / name) << text;
    return (dir / name).string();
  };
  const auto good = write("good.toml", kFrozen);
  EXPECT_EQ(run_cli("bsde --config " + good + " --out " + (dir / "ok").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "ok" / "bsde.json"));

  const auto bad = write("bad.toml", "[grid]\nn = 0\n");
  EXPECT_EQ(run_cli("bsde --config " + bad + " --out " + (dir / "bad").string()), 2);
  const auto err = nlohmann::json::parse(slurp(dir / "bad" / "error.json"));
  EXPECT_EQ(err["error"]["kind"], "validation");
  EXPECT_EQ(err["error"]["field"], "grid.n");

  EXPECT_EQ(run_cli("bsde --config " + good + " --bogus"), 2);
  EXPECT_EQ(run_cli("bsde"), 2);
  EXPECT_EQ(run_cli("bsde --config " + (dir / "missing.toml").string()), 2);

  // One step of size sqrt(100) times 1e308 overflows the state.
  const auto blowup = write("blowup.toml",
                            "[grid]\nT = 100\nn = 1\n"
                            "[model]\nsigma = \"constant\"\nsigma_value = 1e308\n"
                            "[solver]\nN = 10\n");
  EXPECT_EQ(run_cli("simulate --config " + blowup + " --out " + (dir / "num").string()), 3);
  const auto num = nlohmann::json::parse(slurp(dir / "num" / "error.json"));
  EXPECT_EQ(num["error"]["kind"], "numerical");
  EXPECT_TRUE(num["error"].contains("step"));
}

TEST(Binary, SeedFlagOverridesTheConfig) {
  const auto dir = scratch("seedflag");
  std::ofstream(dir / "c.toml") << kHeat;
  const auto cfg = (dir / "c.toml").string();
  ASSERT_EQ(run_cli("simulate --config " + cfg + " --seed 99 --out " + (dir / "a").string()), 0);
  const auto j = nlohmann::json::parse(slurp(dir / "a" / "simulate.json"));
  EXPECT_EQ(j["config"]["solver"]["seed"], 99u);
}
