#include "ppde/paths.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ppde/errors.hpp"

namespace ppde {

TimeGrid::TimeGrid(double horizon, std::size_t steps)
    : horizon_(horizon), steps_(steps), spacing_(horizon / static_cast<double>(steps)) {
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw ValidationError("grid.T", "horizon must be finite and > 0");
  if (steps < 1) throw ValidationError("grid.n", "need at least one step");
}

TimeGrid TimeGrid::suffix(std::size_t i) const {
  if (i >= steps_) throw ValidationError("index", "no steps remain after the horizon");
  return TimeGrid(horizon_ - time(i), steps_ - i);
}

bool TimeGrid::same_spacing(const TimeGrid& other) const noexcept {
  return std::abs(spacing_ - other.spacing_) <= 1e-12 * std::max(spacing_, other.spacing_);
}

PathView::PathView(TimeGrid grid, std::size_t dim, std::span<const double> values)
    : grid_(grid), dim_(dim), values_(values) {}

DiscretePath::DiscretePath(TimeGrid grid, std::size_t dim, std::vector<double> values)
    : grid_(grid), dim_(dim), values_(std::move(values)) {
  if (dim_ < 1) throw ValidationError("dim", "dimension must be >= 1");
  if (values_.size() != (grid_.steps() + 1) * dim_)
    throw ValidationError("path", "expected (n+1)*d values");
  for (std::size_t c = 0; c < dim_; ++c)
    if (values_[c] != 0.0) throw ValidationError("path", "paths start at the origin");
}

DiscretePath DiscretePath::scalar(std::vector<double> points, double horizon) {
  if (points.size() < 2) throw ValidationError("path", "need at least two points");
  return {TimeGrid(horizon, points.size() - 1), 1, std::move(points)};
}

DiscretePath DiscretePath::zero(TimeGrid grid, std::size_t dim) {
  return {grid, dim, std::vector<double>((grid.steps() + 1) * dim, 0.0)};
}

std::string to_string(MeasureKind kind) {
  switch (kind) {
    case MeasureKind::base: return "base";
    case MeasureKind::drifted: return "drifted";
    case MeasureKind::conditional: return "conditional";
    case MeasureKind::tree: return "tree";
    case MeasureKind::external: return "external";
  }
  return "unknown";
}

PathEnsemble::PathEnsemble(TimeGrid grid, std::size_t dim, std::size_t count,
                           std::vector<double> values, std::vector<double> weights,
                           std::uint64_t seed, MeasureTag tag, std::vector<double> increments,
                           std::size_t first_random_step)
    : grid_(grid), dim_(dim), count_(count), seed_(seed), tag_(std::move(tag)),
      first_random_step_(first_random_step) {
  if (count_ < 1) throw ValidationError("N", "ensemble needs at least one path");
  if (dim_ < 1) throw ValidationError("dim", "dimension must be >= 1");
  const std::size_t stride = (grid_.steps() + 1) * dim_;
  if (values.size() != count_ * stride)
    throw ValidationError("ensemble", "expected N*(n+1)*d values");
  for (std::size_t k = 0; k < count_; ++k)
    for (std::size_t c = 0; c < dim_; ++c)
      if (values[k * stride + c] != 0.0)
        throw ValidationError("ensemble", "path " + std::to_string(k) + " does not start at 0");
  if (weights.empty()) weights.assign(count_, 1.0);
  if (weights.size() != count_) throw ValidationError("weights", "expected N weights");
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0)
      throw ValidationError("weights", "weights must be finite and nonnegative");
    if (w != 1.0) unit_weights_ = false;
  }
  if (!increments.empty()) {
    if (increments.size() != count_ * grid_.steps() * dim_)
      throw ValidationError("increments", "expected N*n*d increments");
    increments_ = std::make_shared<const std::vector<double>>(std::move(increments));
  }
  values_ = std::make_shared<const std::vector<double>>(std::move(values));
  weights_ = std::make_shared<const std::vector<double>>(std::move(weights));
}

std::span<const double> PathEnsemble::increment(std::size_t k, std::size_t i) const {
  if (!increments_) throw ValidationError("increments", "ensemble carries no driving increments");
  return {increments_->data() + (k * grid_.steps() + i) * dim_, dim_};
}

const std::vector<double>& PathEnsemble::increments() const {
  if (!increments_) throw ValidationError("increments", "ensemble carries no driving increments");
  return *increments_;
}

PathEnsemble PathEnsemble::with_weights(std::vector<double> weights) const {
  if (weights.size() != count_) throw ValidationError("weights", "expected N weights");
  PathEnsemble out = *this;
  out.unit_weights_ = true;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0)
      throw ValidationError("weights", "weights must be finite and nonnegative");
    if (w != 1.0) out.unit_weights_ = false;
  }
  out.weights_ = std::make_shared<const std::vector<double>>(std::move(weights));
  return out;
}

// ---------------------------------------------------------------------------

std::string to_string(Role role) {
  switch (role) {
    case Role::sigma: return "sigma";
    case Role::driver: return "driver";
    case Role::terminal: return "terminal";
    case Role::control: return "control";
    case Role::obstacle: return "obstacle";
    case Role::candidate: return "candidate";
  }
  return "unknown";
}

AdaptedFunctional AdaptedFunctional::sigma(std::size_t dim, VectorFn fn, std::string name) {
  if (dim < 1) throw ValidationError("sigma", "dimension must be >= 1");
  AdaptedFunctional f(Role::sigma, std::move(name));
  f.dim_ = dim;
  f.vector_ = std::move(fn);
  return f;
}

AdaptedFunctional AdaptedFunctional::control(std::size_t dim, double bound, VectorFn fn,
                                             std::string name) {
  if (dim < 1) throw ValidationError("control", "dimension must be >= 1");
  if (!(bound >= 0.0)) throw ValidationError("L", "control bound must be >= 0");
  AdaptedFunctional f(Role::control, std::move(name));
  f.dim_ = dim;
  f.bound_ = bound;
  f.vector_ = std::move(fn);
  return f;
}

AdaptedFunctional AdaptedFunctional::driver(DriverFn fn, std::string name) {
  AdaptedFunctional f(Role::driver, std::move(name));
  f.driver_ = std::move(fn);
  return f;
}

AdaptedFunctional AdaptedFunctional::terminal(std::function<double(const PathView&)> fn,
                                              std::string name) {
  AdaptedFunctional f(Role::terminal, std::move(name));
  f.scalar_ = [fn = std::move(fn)](std::size_t, const PathView& p) { return fn(p); };
  return f;
}

AdaptedFunctional AdaptedFunctional::obstacle(ScalarFn fn, std::string name) {
  AdaptedFunctional f(Role::obstacle, std::move(name));
  f.scalar_ = std::move(fn);
  return f;
}

AdaptedFunctional AdaptedFunctional::candidate(ScalarFn fn, std::string name) {
  AdaptedFunctional f(Role::candidate, std::move(name));
  f.scalar_ = std::move(fn);
  return f;
}

void AdaptedFunctional::require(Role role, const char* field) const {
  if (role_ != role)
    throw ValidationError(field, "expected role " + to_string(role) + ", got " +
                                     to_string(role_) + " (" + name_ + ")");
}

void AdaptedFunctional::require_scalar(const char* field) const {
  if (!scalar_)
    throw ValidationError(field, "expected a scalar functional, got role " + to_string(role_));
}

double AdaptedFunctional::scalar(std::size_t i, const PathView& path) const {
  require_scalar("functional");
  return scalar_(role_ == Role::terminal ? path.steps() : i, path);
}

double AdaptedFunctional::terminal_value(const PathView& path) const {
  return scalar(path.steps(), path);
}

void AdaptedFunctional::vector(std::size_t i, const PathView& path, std::span<double> out) const {
  if (!vector_) throw ValidationError(name_.c_str(), "not a sigma or control functional");
  vector_(i, path, out);
}

double AdaptedFunctional::drive(std::size_t i, const PathView& path, double y,
                                std::span<const double> z) const {
  if (!driver_) throw ValidationError(name_.c_str(), "not a driver functional");
  return driver_(i, path, y, z);
}

std::vector<double> AdaptedFunctional::evaluate(std::size_t i, const PathView& path, double y,
                                                std::span<const double> z) const {
  switch (role_) {
    case Role::sigma: {
      std::vector<double> out(dim_ * dim_);
      vector_(i, path, out);
      return out;
    }
    case Role::control: {
      std::vector<double> out(dim_);
      vector_(i, path, out);
      return out;
    }
    case Role::driver: {
      std::vector<double> zero;
      if (z.empty()) {
        zero.assign(path.dim(), 0.0);
        z = zero;
      }
      return {driver_(i, path, y, z)};
    }
    default: return {scalar(i, path)};
  }
}

// ---------------------------------------------------------------------------

DiscretePath concat(const PathView& omega, std::size_t i, const PathView& suffix) {
  const std::size_t n = omega.steps();
  const std::size_t d = omega.dim();
  if (i > n) throw ValidationError("index", "concatenation index beyond the grid");
  if (suffix.dim() != d) throw ValidationError("suffix", "dimension mismatch");
  if (suffix.steps() != n - i)
    throw ValidationError("suffix", "suffix must have n - i steps");
  if (i < n && !omega.grid().same_spacing(suffix.grid()))
    throw ValidationError("suffix", "grid spacing mismatch");
  for (std::size_t c = 0; c < d; ++c)
    if (suffix(0, c) != 0.0) throw ValidationError("suffix", "suffix must start at 0");

  std::vector<double> values(omega.values().begin(), omega.values().end());
  for (std::size_t j = i + 1; j <= n; ++j)
    for (std::size_t c = 0; c < d; ++c) values[j * d + c] = omega(i, c) + suffix(j - i, c);
  return {omega.grid(), d, std::move(values)};
}

namespace {
double point_norm(std::span<const double> p) {
  if (p.size() == 1) return std::abs(p[0]);
  double s = 0.0;
  for (double x : p) s += x * x;
  return std::sqrt(s);
}
}  // namespace

double sup_norm(const PathView& omega, std::size_t i) {
  if (i > omega.steps()) throw ValidationError("index", "index out of range");
  double m = 0.0;
  for (std::size_t j = 0; j <= i; ++j) m = std::max(m, point_norm(omega.point(j)));
  return m;
}

double pseudo_distance(std::size_t i, const PathView& omega, std::size_t j,
                       const PathView& other) {
  if (!(omega.grid() == other.grid()) || omega.dim() != other.dim())
    throw ValidationError("paths", "incompatible grids or dimensions");
  const std::size_t n = omega.steps();
  if (i > n || j > n) throw ValidationError("index", "index out of range");
  const std::size_t d = omega.dim();
  double sup = 0.0;
  std::vector<double> diff(d);
  for (std::size_t s = 0; s <= n; ++s) {
    const std::size_t a = std::min(s, i);
    const std::size_t b = std::min(s, j);
    for (std::size_t c = 0; c < d; ++c) diff[c] = omega(a, c) - other(b, c);
    sup = std::max(sup, point_norm(diff));
  }
  return std::abs(omega.grid().time(i) - omega.grid().time(j)) + sup;
}

std::vector<double> shift_eval(const AdaptedFunctional& f, std::size_t i, const PathView& omega,
                               const PathView& suffix, std::size_t shifted_index, double y,
                               std::span<const double> z) {
  if (shifted_index > suffix.steps())
    throw ValidationError("index", "shifted index beyond the suffix grid");
  const DiscretePath joined = concat(omega, i, suffix);
  return f.evaluate(i + shifted_index, joined.view(), y, z);
}

AdaptednessReport probe_adaptedness(const AdaptedFunctional& f, const TimeGrid& grid,
                                    std::size_t dim, std::uint64_t seed, std::size_t trials) {
  AdaptednessReport report;
  if (f.role() == Role::terminal) return report;  // F_T-measurable by definition
  const std::size_t n = grid.steps();
  const double sd = std::sqrt(grid.spacing());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> z(dim, 0.0);
  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<double> a((n + 1) * dim, 0.0);
    for (std::size_t j = 1; j <= n; ++j)
      for (std::size_t c = 0; c < dim; ++c) a[j * dim + c] = a[(j - 1) * dim + c] + sd * normal(rng);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> b = a;
      for (std::size_t j = i + 1; j <= n; ++j)
        for (std::size_t c = 0; c < dim; ++c) b[j * dim + c] = b[(j - 1) * dim + c] + sd * normal(rng);
      const PathView pa(grid, dim, a), pb(grid, dim, b);
      for (std::size_t j = 0; j <= i; ++j) {
        const double y = 0.5;
        if (f.evaluate(j, pa, y, z) != f.evaluate(j, pb, y, z)) {
          report.adapted = false;
          report.index = j;
          report.trials = t + 1;
          return report;
        }
      }
    }
    report.trials = t + 1;
  }
  return report;
}

}  // namespace ppde
