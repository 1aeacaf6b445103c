#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "experiment.hpp"
#include "ppde/errors.hpp"

namespace ppde::cli {
namespace {

constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Drops a trailing "# comment" that is not inside quotes.
std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (s[k] == '"') quoted = !quoted;
    if (s[k] == '#' && !quoted) return trim(s.substr(0, k));
  }
  return trim(s);
}

std::string unquote(const std::string& raw) {
  std::string s = trim(raw);
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\'')))
    return s.substr(1, s.size() - 2);
  return s;
}

double to_double(const std::string& field, const std::string& raw) {
  const std::string s = unquote(raw);
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(field, "expected a number, got '" + s + "'");
  }
}

std::uint64_t to_u64(const std::string& field, const std::string& raw) {
  const std::string s = unquote(raw);
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw ValidationError(field, "expected a nonnegative integer, got '" + s + "'");
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw ValidationError(field, "integer out of range: '" + s + "'");
  }
}

bool to_bool(const std::string& field, const std::string& raw) {
  const std::string s = unquote(raw);
  if (s == "true") return true;
  if (s == "false") return false;
  throw ValidationError(field, "expected true or false, got '" + s + "'");
}

std::vector<std::string> split_array(const std::string& field, const std::string& raw) {
  const std::string s = trim(raw);
  if (s.size() < 2 || s.front() != '[' || s.back() != ']')
    throw ValidationError(field, "expected an array [a, b, ...]");
  std::vector<std::string> out;
  std::stringstream body(s.substr(1, s.size() - 2));
  std::string item;
  while (std::getline(body, item, ','))
    if (!trim(item).empty()) out.push_back(trim(item));
  return out;
}

std::vector<double> to_doubles(const std::string& field, const std::string& raw) {
  std::vector<double> out;
  for (const auto& item : split_array(field, raw)) out.push_back(to_double(field, item));
  return out;
}

std::vector<std::size_t> to_sizes(const std::string& field, const std::string& raw) {
  std::vector<std::size_t> out;
  for (const auto& item : split_array(field, raw)) out.push_back(to_u64(field, item));
  return out;
}

void require_in(const std::string& field, const std::string& value,
                const std::set<std::string>& allowed) {
  if (!allowed.count(value)) {
    std::string list;
    for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
    throw ValidationError(field, "unknown name '" + value + "' (expected one of: " + list + ")");
  }
}

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ValidationError(field, what);
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  // Inline comments and blank lines are removed before the INI reader sees them.
  std::stringstream cleaned;
  std::stringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    cleaned << strip_comment(t) << '\n';
  }
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(cleaned, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ValidationError("config", "line " + std::to_string(e.line()) + ": " + e.message());
  }

  ExperimentConfig c;
  c.driver.a = kUnset;
  c.driver.b = kUnset;
  c.driver.L = kUnset;
  for (const auto& [section, keys] : tree) {
    if (keys.empty())
      throw ValidationError(section, "key outside of a section or empty section");
    for (const auto& [key, node] : keys) {
      const std::string field = section + "." + key;
      const std::string v = node.get_value<std::string>();
      const auto unknown = [&] { throw ValidationError(field, "unknown setting"); };
      if (section == "grid") {
        if (key == "T") c.grid.T = to_double(field, v);
        else if (key == "n") c.grid.n = to_u64(field, v);
        else unknown();
      } else if (section == "model") {
        if (key == "sigma") c.model.sigma = unquote(v);
        else if (key == "sigma_value") c.model.sigma_value = to_double(field, v);
        else if (key == "sigma_matrix") c.model.sigma_matrix = to_doubles(field, v);
        else if (key == "sigma_c") c.model.sigma_c = to_double(field, v);
        else if (key == "d") c.model.d = to_u64(field, v);
        else if (key == "L") c.model.L = to_double(field, v);
        else if (key == "L0") c.model.L0 = to_double(field, v);
        else unknown();
      } else if (section == "driver") {
        if (key == "name") c.driver.name = unquote(v);
        else if (key == "c") c.driver.c = to_double(field, v);
        else if (key == "a") c.driver.a = to_double(field, v);
        else if (key == "b") c.driver.b = to_double(field, v);
        else if (key == "L") c.driver.L = to_double(field, v);
        else unknown();
      } else if (section == "payoff") {
        if (key == "name") c.payoff.name = unquote(v);
        else if (key == "direction") c.payoff.direction = to_doubles(field, v);
        else if (key == "scale") c.payoff.scale = to_double(field, v);
        else if (key == "offset") c.payoff.offset = to_double(field, v);
        else if (key == "time_coef") c.payoff.time_coef = to_double(field, v);
        else if (key == "center") c.payoff.center = to_double(field, v);
        else unknown();
      } else if (section == "solver") {
        if (key == "N") c.solver.N = to_u64(field, v);
        else if (key == "seed") c.solver.seed = to_u64(field, v);
        else if (key == "degree") c.solver.degree = static_cast<int>(to_u64(field, v));
        else if (key == "ridge") c.solver.ridge = to_double(field, v);
        else if (key == "running_max") c.solver.running_max = to_bool(field, v);
        else if (key == "running_integral") c.solver.running_integral = to_bool(field, v);
        else if (key == "tol_contact") c.solver.tol_contact = to_double(field, v);
        else if (key == "estimator") c.solver.estimator = unquote(v);
        else unknown();
      } else if (section == "output") {
        if (key == "dir") c.output.dir = unquote(v);
        else if (key == "csv") c.output.csv = to_bool(field, v);
        else if (key == "csv_paths") c.output.csv_paths = to_u64(field, v);
        else if (key == "timing") c.output.timing = to_bool(field, v);
        else if (key == "ensemble") c.output.ensemble = to_bool(field, v);
        else unknown();
      } else if (section == "expectation") {
        if (key == "side") c.expectation.side = unquote(v);
        else if (key == "mode") c.expectation.mode = unquote(v);
        else if (key == "lambda") c.expectation.lambda = to_double(field, v);
        else unknown();
      } else if (section == "viscosity") {
        if (key == "check") c.viscosity.check = unquote(v);
        else if (key == "mode") c.viscosity.mode = unquote(v);
        else if (key == "points") c.viscosity.points = to_u64(field, v);
        else if (key == "horizon_steps") c.viscosity.horizon_steps = to_sizes(field, v);
        else if (key == "radius") c.viscosity.radius = to_double(field, v);
        else if (key == "window") c.viscosity.window = to_u64(field, v);
        else if (key == "lo") c.viscosity.lo = to_u64(field, v);
        else if (key == "hi") c.viscosity.hi = to_u64(field, v);
        else if (key == "alpha") c.viscosity.alpha = to_double(field, v);
        else if (key == "beta") c.viscosity.beta = to_doubles(field, v);
        else if (key == "side") c.viscosity.side = unquote(v);
        else unknown();
      } else if (section == "compare") {
        if (key == "mode") c.compare.mode = unquote(v);
        else if (key == "offset") c.compare.offset = to_double(field, v);
        else if (key == "sample_paths") c.compare.sample_paths = to_u64(field, v);
        else if (key == "difference") c.compare.difference = to_bool(field, v);
        else if (key == "jet_paths") c.compare.jet_paths = to_u64(field, v);
        else unknown();
      } else if (section == "converge") {
        if (key == "experiment") c.converge.experiment = unquote(v);
        else if (key == "N") c.converge.N = to_sizes(field, v);
        else if (key == "n") c.converge.n = to_sizes(field, v);
        else if (key == "target") c.converge.target = to_double(field, v);
        else unknown();
      } else {
        throw ValidationError(section, "unknown section");
      }
    }
  }
  resolve(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ValidationError("config", "cannot read " + file.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

void resolve(ExperimentConfig& c) {
  require(std::isfinite(c.grid.T) && c.grid.T > 0.0, "grid.T", "must be positive");
  require(c.grid.n >= 1, "grid.n", "must be >= 1");
  const std::size_t n = c.grid.n;

  require(c.model.d >= 1, "model.d", "must be >= 1");
  const std::size_t d = c.model.d;
  require_in("model.sigma", c.model.sigma, {"identity", "constant", "tanh"});
  require(std::isfinite(c.model.sigma_value), "model.sigma_value", "must be finite");
  require(c.model.sigma_matrix.empty() || c.model.sigma_matrix.size() == d * d,
          "model.sigma_matrix", "needs d*d entries");
  require(std::isfinite(c.model.sigma_c), "model.sigma_c", "must be finite");
  require(std::isfinite(c.model.L) && c.model.L >= 0.0, "model.L", "must be >= 0");
  require(std::isfinite(c.model.L0) && c.model.L0 >= 0.0, "model.L0", "must be >= 0");

  require_in("driver.name", c.driver.name, {"zero", "constant", "linear", "absolute", "trig"});
  const bool trig = c.driver.name == "trig";
  if (std::isnan(c.driver.a)) c.driver.a = trig ? 0.5 : 0.0;
  if (std::isnan(c.driver.b)) c.driver.b = trig ? 0.3 : 0.0;
  if (std::isnan(c.driver.L)) c.driver.L = c.model.L;
  require(std::isfinite(c.driver.c), "driver.c", "must be finite");
  require(std::isfinite(c.driver.a), "driver.a", "must be finite");
  require(std::isfinite(c.driver.b), "driver.b", "must be finite");
  require(std::isfinite(c.driver.L) && c.driver.L >= 0.0, "driver.L", "must be >= 0");

  require_in("payoff.name", c.payoff.name,
             {"linear", "square", "running_max", "average", "sine", "time_quadratic", "zero"});
  if (c.payoff.direction.empty()) {
    c.payoff.direction.assign(d, 0.0);
    c.payoff.direction[0] = 1.0;
  }
  require(c.payoff.direction.size() == d, "payoff.direction", "needs d entries");

  require(c.solver.N >= 1, "solver.N", "must be >= 1");
  require(c.solver.degree >= 1, "solver.degree", "must be >= 1");
  require(c.solver.ridge >= 0.0, "solver.ridge", "must be >= 0");
  require(c.solver.tol_contact >= 0.0, "solver.tol_contact", "must be >= 0");
  require_in("solver.estimator", c.solver.estimator, {"regression", "tree"});
  if (c.solver.estimator == "tree") {
    require(n <= 20, "grid.n", "tree mode needs n <= 20");
    require(d == 1, "model.d", "tree mode needs d = 1");
    c.solver.N = std::size_t{1} << n;
  }

  require_in("expectation.side", c.expectation.side, {"upper", "lower"});
  require_in("expectation.mode", c.expectation.mode, {"nonlinear", "drifted", "girsanov"});
  require(std::isfinite(c.expectation.lambda), "expectation.lambda", "must be finite");

  auto& v = c.viscosity;
  require_in("viscosity.check", v.check, {"martingale", "gap", "jet", "tangency"});
  require_in("viscosity.mode", v.mode, {"p_sub", "p_super", "e_sub", "e_super"});
  require_in("viscosity.side", v.side, {"sub", "super"});
  if (v.horizon_steps.empty()) v.horizon_steps = {std::max<std::size_t>(1, n / 10)};
  for (std::size_t m : v.horizon_steps) require(m >= 1, "viscosity.horizon_steps", "must be >= 1");
  require(v.radius > 0.0, "viscosity.radius", "must be positive");
  require(v.window >= 1, "viscosity.window", "must be >= 1");
  if (n == 1) v.lo = 0;  // the origin is the only point with a step ahead
  if (v.hi == 0) v.hi = v.check == "jet" ? (n > v.window ? n - v.window : 0) : n - 1;
  require(v.lo <= v.hi && v.hi < n, "viscosity.hi", "need lo <= hi < n");
  require(v.check != "jet" || v.hi + v.window <= n, "viscosity.window", "window exceeds the grid");
  require(v.points >= 1, "viscosity.points", "must be >= 1");
  if (v.beta.empty()) v.beta.assign(d, 0.0);
  require(v.beta.size() == d, "viscosity.beta", "needs d entries");

  require_in("compare.mode", c.compare.mode, {"bsde", "candidates"});
  require(c.compare.sample_paths >= 1, "compare.sample_paths", "must be >= 1");
  require_in("converge.experiment", c.converge.experiment, {"expectation", "bsde", "snell"});
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["grid"] = {{"T", c.grid.T}, {"n", c.grid.n}};
  j["model"] = {{"sigma", c.model.sigma},     {"sigma_value", c.model.sigma_value},
                {"sigma_matrix", c.model.sigma_matrix}, {"sigma_c", c.model.sigma_c},
                {"d", c.model.d},             {"L", c.model.L},
                {"L0", c.model.L0}};
  j["driver"] = {{"name", c.driver.name}, {"c", c.driver.c}, {"a", c.driver.a},
                 {"b", c.driver.b},       {"L", c.driver.L}};
  j["payoff"] = {{"name", c.payoff.name},   {"direction", c.payoff.direction},
                 {"scale", c.payoff.scale}, {"offset", c.payoff.offset},
                 {"time_coef", c.payoff.time_coef}, {"center", c.payoff.center}};
  j["solver"] = {{"N", c.solver.N},
                 {"seed", c.solver.seed},
                 {"degree", c.solver.degree},
                 {"ridge", c.solver.ridge},
                 {"running_max", c.solver.running_max},
                 {"running_integral", c.solver.running_integral},
                 {"tol_contact", c.solver.tol_contact},
                 {"estimator", c.solver.estimator}};
  j["output"] = {{"csv", c.output.csv},
                 {"csv_paths", c.output.csv_paths},
                 {"timing", c.output.timing},
                 {"ensemble", c.output.ensemble}};
  j["expectation"] = {{"side", c.expectation.side},
                      {"mode", c.expectation.mode},
                      {"lambda", c.expectation.lambda}};
  const auto& v = c.viscosity;
  j["viscosity"] = {{"check", v.check}, {"mode", v.mode},   {"points", v.points},
                    {"horizon_steps", v.horizon_steps},     {"radius", v.radius},
                    {"window", v.window}, {"lo", v.lo},     {"hi", v.hi},
                    {"alpha", v.alpha},   {"beta", v.beta}, {"side", v.side}};
  j["compare"] = {{"mode", c.compare.mode},
                  {"offset", c.compare.offset},
                  {"sample_paths", c.compare.sample_paths},
                  {"difference", c.compare.difference},
                  {"jet_paths", c.compare.jet_paths}};
  j["converge"] = {{"experiment", c.converge.experiment},
                   {"N", c.converge.N},
                   {"n", c.converge.n},
                   {"target", c.converge.target ? nlohmann::json(*c.converge.target)
                                                : nlohmann::json(nullptr)}};
  return j;
}

}  // namespace ppde::cli
