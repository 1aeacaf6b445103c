#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "ppde/paths.hpp"

namespace ppde {

/// Grid-valued stopping rule: one stopping index per path of an ensemble.
class StoppingRule {
 public:
  explicit StoppingRule(std::vector<std::size_t> index) : index_(std::move(index)) {}

  /// The same index on every path.
  static StoppingRule fixed(std::size_t count, std::size_t index);

  /// First index j in [start, horizon_j] where stop(j, path) holds, else the
  /// path's horizon index. `horizon` may be empty (meaning n everywhere).
  static StoppingRule first_hit(const PathEnsemble& ensemble,
                                const std::function<bool(std::size_t, const PathView&)>& stop,
                                std::size_t start = 0, const StoppingRule* horizon = nullptr);

  /// Localising time started at `start`: min(start + max_steps, first j with
  /// |omega_{t_j} - omega_{t_start}| >= radius, n).
  static StoppingRule localizing(const PathEnsemble& ensemble, std::size_t start,
                                 std::size_t max_steps,
                                 double radius = std::numeric_limits<double>::infinity());

  std::size_t size() const noexcept { return index_.size(); }
  std::size_t operator[](std::size_t k) const noexcept { return index_[k]; }
  const std::vector<std::size_t>& indices() const noexcept { return index_; }

  /// Per-path check that the rule does not exceed `horizon`.
  bool bounded_by(const StoppingRule& horizon) const;

  /// Weighted mean stopping time t_tau over the ensemble.
  double mean_time(const PathEnsemble& ensemble) const;

 private:
  std::vector<std::size_t> index_;
};

/// Prefix-agreement probe for a stopping predicate: two paths that agree up
/// to index i must get the same stop/continue decision at every j <= i.
bool probe_predicate_adaptedness(const std::function<bool(std::size_t, const PathView&)>& stop,
                                 const TimeGrid& grid, std::size_t dim, std::uint64_t seed,
                                 std::size_t trials = 8);

}  // namespace ppde
