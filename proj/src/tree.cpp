#include <cmath>
#include <functional>

#include "ppde/errors.hpp"
#include "ppde/snell.hpp"

namespace ppde {

PathEnsemble tree_ensemble(std::size_t depth, double h) {
  if (depth == 0 || depth > 20) throw ValidationError("depth", "tree depth must be in [1, 20]");
  if (!(h > 0.0) || !std::isfinite(h)) throw ValidationError("h", "step must be positive");
  const std::size_t count = std::size_t{1} << depth;
  const double step = std::sqrt(h);
  std::vector<double> values(count * (depth + 1), 0.0);
  std::vector<double> increments(count * depth);
  for (std::size_t k = 0; k < count; ++k) {
    for (std::size_t j = 0; j < depth; ++j) {
      const bool down = (k >> (depth - 1 - j)) & 1U;
      const double dw = down ? -step : step;
      increments[k * depth + j] = dw;
      values[k * (depth + 1) + j + 1] = values[k * (depth + 1) + j] + dw;
    }
  }
  MeasureTag tag{MeasureKind::tree, "binary", 0};
  return PathEnsemble(TimeGrid(static_cast<double>(depth) * h, depth), 1, count,
                      std::move(values), std::vector<double>(count, 1.0), 0, tag,
                      std::move(increments));
}

TreeSnellResult brute_force_snell_tree(const AdaptedFunctional& obstacle, double bound,
                                       std::size_t depth, double h, bool enumerate) {
  obstacle.require_scalar("obstacle");
  if (!(bound >= 0.0) || !std::isfinite(bound))
    throw ValidationError("L", "drift bound must be finite and nonnegative");
  if (depth > 12) throw ValidationError("depth", "tree depth above 12");
  if (enumerate && depth > 4) throw ValidationError("depth", "enumeration needs depth <= 4");
  const auto tree = tree_ensemble(depth, h);
  const double root_h = std::sqrt(h);

  // x[j][q]: obstacle at node q of depth j, read on the leftmost leaf below it.
  std::vector<std::vector<double>> x(depth + 1);
  for (std::size_t j = 0; j <= depth; ++j) {
    x[j].resize(std::size_t{1} << j);
    for (std::size_t q = 0; q < x[j].size(); ++q) {
      const PathView path = tree.path(q << (depth - j));
      x[j][q] = obstacle.role() == Role::terminal ? obstacle.terminal_value(path)
                                                  : obstacle.scalar(j, path);
      if (!std::isfinite(x[j][q])) throw NumericalError("non-finite obstacle value", q, j);
    }
  }
  const auto one_step = [&](double up, double down) {
    return 0.5 * (up + down) + bound * root_h * 0.5 * std::abs(up - down);
  };

  TreeSnellResult result;
  result.stop.resize(depth + 1);
  std::vector<double> v = x[depth];
  result.stop[depth].assign(v.size(), 1);
  for (std::size_t j = depth; j-- > 0;) {
    std::vector<double> w(std::size_t{1} << j);
    result.stop[j].resize(w.size());
    for (std::size_t q = 0; q < w.size(); ++q) {
      const double cont = one_step(v[2 * q], v[2 * q + 1]);
      result.stop[j][q] = x[j][q] >= cont ? 1 : 0;
      w[q] = std::max(x[j][q], cont);
    }
    v = std::move(w);
  }
  result.value = v[0];

  if (enumerate) {
    // Internal nodes in breadth-first order: node (j, q) has id 2^j - 1 + q.
    const std::size_t internal = (std::size_t{1} << depth) - 1;
    std::function<double(std::size_t, std::size_t, std::uint64_t)> evaluate =
        [&](std::size_t j, std::size_t q, std::uint64_t rule) -> double {
      if (j == depth || ((rule >> ((std::size_t{1} << j) - 1 + q)) & 1U)) return x[j][q];
      return one_step(evaluate(j + 1, 2 * q, rule), evaluate(j + 1, 2 * q + 1, rule));
    };
    double best = -std::numeric_limits<double>::infinity();
    for (std::uint64_t rule = 0; rule < (std::uint64_t{1} << internal); ++rule)
      best = std::max(best, evaluate(0, 0, rule));
    result.enumerated = best;
  }
  return result;
}

}  // namespace ppde
