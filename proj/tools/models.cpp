#include <cmath>

#include "experiment.hpp"
#include "ppde/errors.hpp"

namespace ppde::cli {

AdaptedFunctional make_sigma(const ExperimentConfig& c) {
  const std::size_t d = c.model.d;
  if (c.model.sigma == "identity") {
    return AdaptedFunctional::sigma(
        d,
        [d](std::size_t, const PathView&, std::span<double> out) {
          for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) out[a * d + b] = a == b ? 1.0 : 0.0;
        },
        "identity");
  }
  if (c.model.sigma == "constant") {
    std::vector<double> m = c.model.sigma_matrix;
    if (m.empty()) {
      m.assign(d * d, 0.0);
      for (std::size_t a = 0; a < d; ++a) m[a * d + a] = c.model.sigma_value;
    }
    return AdaptedFunctional::sigma(
        d, [m](std::size_t, const PathView&, std::span<double> out) {
          std::copy(m.begin(), m.end(), out.begin());
        },
        "constant");
  }
  const double k = c.model.sigma_c;
  return AdaptedFunctional::sigma(
      d,
      [d, k](std::size_t i, const PathView& path, std::span<double> out) {
        double sq = 0.0;
        for (std::size_t a = 0; a < d; ++a) sq += path(i, a) * path(i, a);
        const double s = 1.0 + k * std::tanh(std::sqrt(sq));
        for (std::size_t a = 0; a < d; ++a)
          for (std::size_t b = 0; b < d; ++b) out[a * d + b] = a == b ? s : 0.0;
      },
      "tanh");
}

AdaptedFunctional make_driver(const ExperimentConfig& c) {
  const auto& dr = c.driver;
  const double a = dr.a, b = dr.b, cst = dr.c, L = dr.L;
  const auto sum = [](std::span<const double> z) {
    double s = 0.0;
    for (double v : z) s += v;
    return s;
  };
  if (dr.name == "zero")
    return AdaptedFunctional::driver(
        [](std::size_t, const PathView&, double, std::span<const double>) { return 0.0; }, "zero");
  if (dr.name == "constant")
    return AdaptedFunctional::driver(
        [cst](std::size_t, const PathView&, double, std::span<const double>) { return cst; },
        "constant");
  if (dr.name == "linear")
    return AdaptedFunctional::driver(
        [a, b, sum](std::size_t, const PathView&, double y, std::span<const double> z) {
          return a * y + b * sum(z);
        },
        "linear");
  if (dr.name == "absolute")
    return AdaptedFunctional::driver(
        [L](std::size_t, const PathView&, double, std::span<const double> z) {
          double s = 0.0;
          for (double v : z) s += v * v;
          return L * std::sqrt(s);
        },
        "absolute");
  return AdaptedFunctional::driver(
      [a, b, sum](std::size_t, const PathView&, double y, std::span<const double> z) {
        return a * std::cos(y) + b * sum(z);
      },
      "trig");
}

AdaptedFunctional make_process(const ExperimentConfig& c, double extra_offset) {
  const auto& p = c.payoff;
  const std::vector<double> e = p.direction;
  const double scale = p.scale, offset = p.offset + extra_offset, tc = p.time_coef;
  const double center = p.center, horizon = c.grid.T;
  const std::string name = p.name;
  const auto dot = [e](const PathView& path, std::size_t i) {
    double s = 0.0;
    for (std::size_t a = 0; a < e.size(); ++a) s += e[a] * path(i, a);
    return s;
  };
  std::function<double(std::size_t, const PathView&)> base;
  if (name == "linear") {
    base = [dot](std::size_t i, const PathView& path) { return dot(path, i); };
  } else if (name == "square") {
    base = [](std::size_t i, const PathView& path) {
      double s = 0.0;
      for (double v : path.point(i)) s += v * v;
      return s;
    };
  } else if (name == "running_max") {
    base = [](std::size_t i, const PathView& path) { return sup_norm(path, i); };
  } else if (name == "average") {
    base = [dot, horizon](std::size_t i, const PathView& path) {
      double s = 0.0;
      for (std::size_t j = 0; j < i; ++j) s += dot(path, j);
      return s * path.grid().spacing() / horizon;
    };
  } else if (name == "sine") {
    base = [dot](std::size_t i, const PathView& path) { return std::sin(dot(path, i)); };
  } else if (name == "time_quadratic") {
    base = [center](std::size_t i, const PathView& path) {
      const double t = path.grid().time(i) - center;
      return -t * t;
    };
  } else {
    base = [](std::size_t, const PathView&) { return 0.0; };
  }
  return AdaptedFunctional::candidate(
      [base, scale, offset, tc](std::size_t i, const PathView& path) {
        return scale * base(i, path) + tc * path.grid().time(i) + offset;
      },
      name);
}

AdaptedFunctional make_terminal(const ExperimentConfig& c, double extra_offset) {
  const auto process = make_process(c, extra_offset);
  return AdaptedFunctional::terminal(
      [process](const PathView& path) { return process.scalar(path.steps(), path); },
      c.payoff.name);
}

RegressionBasis make_basis(const ExperimentConfig& c) {
  BasisConfig b;
  b.degree = c.solver.degree;
  b.ridge = c.solver.ridge;
  b.running_max = c.solver.running_max;
  b.running_integral = c.solver.running_integral;
  return RegressionBasis(b);
}

}  // namespace ppde::cli
