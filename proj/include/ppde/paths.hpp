#pragma once

// Discretised canonical space: uniform time grids, paths started at the
// origin, Monte-Carlo ensembles of paths, and the adapted functionals that
// every solver evaluates on them.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ppde {

class TimeGrid {
 public:
  TimeGrid(double horizon, std::size_t steps);

  double horizon() const noexcept { return horizon_; }
  std::size_t steps() const noexcept { return steps_; }
  double spacing() const noexcept { return spacing_; }

  /// t_i = i*T/n, with t_0 = 0 and t_n = T exactly.
  double time(std::size_t i) const noexcept {
    return horizon_ * static_cast<double>(i) / static_cast<double>(steps_);
  }

  /// Grid of the remaining n-i steps after t_i, with the same spacing.
  TimeGrid suffix(std::size_t i) const;

  bool same_spacing(const TimeGrid& other) const noexcept;
  bool operator==(const TimeGrid&) const = default;

 private:
  double horizon_;
  std::size_t steps_;
  double spacing_;
};

/// Non-owning view of one path: (n+1) points in R^d, stored point-major.
class PathView {
 public:
  PathView(TimeGrid grid, std::size_t dim, std::span<const double> values);

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t steps() const noexcept { return grid_.steps(); }
  std::span<const double> values() const noexcept { return values_; }

  std::span<const double> point(std::size_t i) const noexcept {
    return values_.subspan(i * dim_, dim_);
  }
  double operator()(std::size_t i, std::size_t component = 0) const noexcept {
    return values_[i * dim_ + component];
  }

 private:
  TimeGrid grid_;
  std::size_t dim_;
  std::span<const double> values_;
};

/// Owning path with values[0] = 0.
class DiscretePath {
 public:
  DiscretePath(TimeGrid grid, std::size_t dim, std::vector<double> values);

  /// One-dimensional path from its point sequence; the grid has size-1 steps on [0, T].
  static DiscretePath scalar(std::vector<double> points, double horizon = 1.0);
  static DiscretePath zero(TimeGrid grid, std::size_t dim);

  PathView view() const noexcept { return {grid_, dim_, values_}; }
  operator PathView() const noexcept { return view(); }  // NOLINT: cheap view conversion

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<double>& values() const noexcept { return values_; }
  double operator()(std::size_t i, std::size_t component = 0) const noexcept {
    return values_[i * dim_ + component];
  }

 private:
  TimeGrid grid_;
  std::size_t dim_;
  std::vector<double> values_;
};

enum class MeasureKind { base, drifted, conditional, tree, external };

struct MeasureTag {
  MeasureKind kind = MeasureKind::base;
  std::string detail;          // control id for drifted ensembles
  std::size_t prefix_index = 0;  // conditioning index for conditional ensembles
};

std::string to_string(MeasureKind kind);

/// A seeded Monte-Carlo sample of paths with per-path weights.
///
/// Storage is shared and immutable, so copies are cheap and reweighting does
/// not duplicate the paths. When the ensemble came from the simulator it also
/// carries the driving Gaussian increments dW (N x n x d); steps before
/// `first_random_step()` belong to a fixed prefix and have zero increments.
class PathEnsemble {
 public:
  PathEnsemble(TimeGrid grid, std::size_t dim, std::size_t count, std::vector<double> values,
               std::vector<double> weights, std::uint64_t seed, MeasureTag tag,
               std::vector<double> increments = {}, std::size_t first_random_step = 0);

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return count_; }
  std::size_t steps() const noexcept { return grid_.steps(); }
  std::uint64_t seed() const noexcept { return seed_; }
  const MeasureTag& tag() const noexcept { return tag_; }

  PathView path(std::size_t k) const noexcept {
    const std::size_t stride = (grid_.steps() + 1) * dim_;
    return {grid_, dim_, std::span<const double>(values_->data() + k * stride, stride)};
  }
  const std::vector<double>& values() const noexcept { return *values_; }
  /// Shared handle to the path storage (identity for caches).
  std::shared_ptr<const std::vector<double>> shared_values() const noexcept { return values_; }

  std::span<const double> weights() const noexcept { return *weights_; }
  double weight(std::size_t k) const noexcept { return (*weights_)[k]; }
  bool unit_weights() const noexcept { return unit_weights_; }

  bool has_increments() const noexcept { return increments_ != nullptr; }
  std::size_t first_random_step() const noexcept { return first_random_step_; }
  /// Driving increment dW at step i (between t_i and t_{i+1}) of path k.
  std::span<const double> increment(std::size_t k, std::size_t i) const;
  const std::vector<double>& increments() const;

  /// Same paths, new weights (finite and nonnegative).
  PathEnsemble with_weights(std::vector<double> weights) const;

 private:
  TimeGrid grid_;
  std::size_t dim_;
  std::size_t count_;
  std::shared_ptr<const std::vector<double>> values_;
  std::shared_ptr<const std::vector<double>> weights_;
  bool unit_weights_ = true;
  std::uint64_t seed_;
  MeasureTag tag_;
  std::shared_ptr<const std::vector<double>> increments_;
  std::size_t first_random_step_ = 0;
};

// ---------------------------------------------------------------------------
// Adapted functionals

enum class Role { sigma, driver, terminal, control, obstacle, candidate };

std::string to_string(Role role);

/// (i, path) -> scalar. Must only read path points 0..i.
using ScalarFn = std::function<double(std::size_t, const PathView&)>;
/// (i, path, out) -> vector or row-major matrix written to out.
using VectorFn = std::function<void(std::size_t, const PathView&, std::span<double>)>;
/// (i, path, y, z) -> F_t(omega, y, z). z is the integrand against the driving
/// noise, i.e. sigma^T times the gradient in the path variable.
using DriverFn =
    std::function<double(std::size_t, const PathView&, double, std::span<const double>)>;

/// One evaluation contract for sigma, the driver, terminal payoffs, controls,
/// obstacles and candidate solutions. A terminal functional is evaluated at
/// index n; obstacles and candidates are evaluated at any index.
class AdaptedFunctional {
 public:
  static AdaptedFunctional sigma(std::size_t dim, VectorFn fn, std::string name = "sigma");
  static AdaptedFunctional control(std::size_t dim, double bound, VectorFn fn,
                                   std::string name = "control");
  static AdaptedFunctional driver(DriverFn fn, std::string name = "driver");
  static AdaptedFunctional terminal(std::function<double(const PathView&)> fn,
                                    std::string name = "terminal");
  static AdaptedFunctional obstacle(ScalarFn fn, std::string name = "obstacle");
  static AdaptedFunctional candidate(ScalarFn fn, std::string name = "candidate");

  Role role() const noexcept { return role_; }
  const std::string& name() const noexcept { return name_; }
  /// Output dimension d of sigma (d x d) or control (d); 1 for scalar roles.
  std::size_t dim() const noexcept { return dim_; }
  /// Declared bound L for the control role.
  double bound() const noexcept { return bound_; }

  /// Scalar roles: terminal (index ignored, evaluated at n), obstacle, candidate.
  double scalar(std::size_t i, const PathView& path) const;
  /// Terminal value; for obstacle/candidate roles, the value at index n.
  double terminal_value(const PathView& path) const;
  /// sigma (row-major d x d) or control (d) into out.
  void vector(std::size_t i, const PathView& path, std::span<double> out) const;
  double drive(std::size_t i, const PathView& path, double y, std::span<const double> z) const;

  /// Role-generic evaluation: one entry for scalar roles, d*d for sigma, d for control.
  std::vector<double> evaluate(std::size_t i, const PathView& path, double y = 0.0,
                               std::span<const double> z = {}) const;

  /// Same role as a scalar functional; rejects other roles.
  void require(Role role, const char* field) const;
  /// Accepts any of the scalar-in-(i, path) roles.
  void require_scalar(const char* field) const;

 private:
  AdaptedFunctional(Role role, std::string name) : role_(role), name_(std::move(name)) {}

  Role role_;
  std::string name_;
  std::size_t dim_ = 1;
  double bound_ = 0.0;
  ScalarFn scalar_;
  VectorFn vector_;
  DriverFn driver_;
};

// ---------------------------------------------------------------------------
// Path algebra

/// omega (x)_{t_i} suffix: omega on 0..i, then omega_{t_i} + suffix.
DiscretePath concat(const PathView& omega, std::size_t i, const PathView& suffix);

/// Running sup norm max_{j<=i} |omega_{t_j}|.
double sup_norm(const PathView& omega, std::size_t i);

/// |t_i - t_j| + sup over the grid of |omega_{t_i ^ .} - omega'_{t_j ^ .}|.
double pseudo_distance(std::size_t i, const PathView& omega, std::size_t j,
                       const PathView& other);

/// f^{t_i, omega}(suffix) at shifted index s, i.e. f(i + s, omega (x)_{t_i} suffix).
/// For a terminal functional the shifted index is ignored.
std::vector<double> shift_eval(const AdaptedFunctional& f, std::size_t i, const PathView& omega,
                               const PathView& suffix, std::size_t shifted_index,
                               double y = 0.0, std::span<const double> z = {});

struct AdaptednessReport {
  bool adapted = true;
  std::size_t index = 0;  // first index where a violation was seen
  std::size_t trials = 0;
};

/// Randomised prefix-agreement probe: evaluates f on pairs of random paths
/// that coincide up to index i and differ afterwards, for every i.
AdaptednessReport probe_adaptedness(const AdaptedFunctional& f, const TimeGrid& grid,
                                    std::size_t dim, std::uint64_t seed,
                                    std::size_t trials = 8);

}  // namespace ppde
