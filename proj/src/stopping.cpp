#include "ppde/stopping.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ppde/errors.hpp"

namespace ppde {

StoppingRule StoppingRule::fixed(std::size_t count, std::size_t index) {
  return StoppingRule(std::vector<std::size_t>(count, index));
}

StoppingRule StoppingRule::first_hit(const PathEnsemble& ensemble,
                                     const std::function<bool(std::size_t, const PathView&)>& stop,
                                     std::size_t start, const StoppingRule* horizon) {
  const std::size_t n = ensemble.steps();
  if (horizon && horizon->size() != ensemble.size())
    throw ValidationError("horizon", "one horizon index per path required");
  std::vector<std::size_t> index(ensemble.size());
  for (std::size_t k = 0; k < ensemble.size(); ++k) {
    const std::size_t last = horizon ? std::min((*horizon)[k], n) : n;
    const PathView path = ensemble.path(k);
    std::size_t j = std::min(start, last);
    while (j < last && !stop(j, path)) ++j;
    index[k] = j;
  }
  return StoppingRule(std::move(index));
}

StoppingRule StoppingRule::localizing(const PathEnsemble& ensemble, std::size_t start,
                                      std::size_t max_steps, double radius) {
  const std::size_t n = ensemble.steps();
  if (start > n) throw ValidationError("index", "start beyond the grid");
  if (!(radius > 0.0)) throw ValidationError("radius", "localising radius must be > 0");
  const std::size_t d = ensemble.dim();
  const std::size_t cap = std::min(n, start + max_steps);
  std::vector<std::size_t> index(ensemble.size());
  for (std::size_t k = 0; k < ensemble.size(); ++k) {
    const PathView path = ensemble.path(k);
    std::size_t j = start;
    while (j < cap) {
      ++j;
      double dist2 = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double dx = path(j, c) - path(start, c);
        dist2 += dx * dx;
      }
      if (std::sqrt(dist2) >= radius) break;
    }
    index[k] = j;
  }
  return StoppingRule(std::move(index));
}

bool StoppingRule::bounded_by(const StoppingRule& horizon) const {
  if (horizon.size() != size()) return false;
  for (std::size_t k = 0; k < size(); ++k)
    if (index_[k] > horizon[k]) return false;
  return true;
}

double StoppingRule::mean_time(const PathEnsemble& ensemble) const {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < size(); ++k) {
    num += ensemble.weight(k) * ensemble.grid().time(index_[k]);
    den += ensemble.weight(k);
  }
  return den > 0.0 ? num / den : 0.0;
}

bool probe_predicate_adaptedness(const std::function<bool(std::size_t, const PathView&)>& stop,
                                 const TimeGrid& grid, std::size_t dim, std::uint64_t seed,
                                 std::size_t trials) {
  auto as_functional = AdaptedFunctional::candidate(
      [&stop](std::size_t i, const PathView& p) { return stop(i, p) ? 1.0 : 0.0; }, "predicate");
  return probe_adaptedness(as_functional, grid, dim, seed, trials).adapted;
}

}  // namespace ppde
