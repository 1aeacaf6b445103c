#include "ppde/sde.hpp"

#include <cmath>

#include "ppde/errors.hpp"
#include "ppde/parallel.hpp"

namespace ppde {

namespace {

// splitmix64 finaliser: decorrelates neighbouring (seed, path) pairs.
std::uint64_t scramble(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t path)
    : engine_(scramble(scramble(seed) ^ path)) {}

namespace {

struct SimulationSpec {
  const AdaptedFunctional& sigma;
  const AdaptedFunctional* control = nullptr;
  TimeGrid grid;
  std::size_t count;
  std::size_t dim;
  std::uint64_t seed;
  std::size_t start = 0;              // first simulated step
  const PathView* prefix = nullptr;   // fixed points 0..start
};

void check_finite(std::span<const double> v, const char* what, std::size_t k, std::size_t i) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericalError(std::string("non-finite ") + what, k, i);
}

std::pair<std::vector<double>, std::vector<double>> run(const SimulationSpec& s) {
  s.sigma.require(Role::sigma, "sigma");
  if (s.sigma.dim() != s.dim) throw ValidationError("sigma", "dimension mismatch");
  if (s.control) {
    s.control->require(Role::control, "control");
    if (s.control->dim() != s.dim) throw ValidationError("control", "dimension mismatch");
  }
  if (s.count < 1) throw ValidationError("N", "need at least one path");

  const std::size_t n = s.grid.steps(), d = s.dim;
  const std::size_t stride = (n + 1) * d;
  const double h = s.grid.spacing();
  const double sd = std::sqrt(h);
  std::vector<double> values(s.count * stride, 0.0);
  std::vector<double> increments(s.count * n * d, 0.0);

  parallel_for(s.count, [&](std::size_t begin, std::size_t end) {
    std::vector<double> sig(d * d), lam(d), drive(d);
    for (std::size_t k = begin; k < end; ++k) {
      double* x = values.data() + k * stride;
      double* dw = increments.data() + k * n * d;
      if (s.prefix)
        for (std::size_t j = 0; j <= s.start; ++j)
          for (std::size_t c = 0; c < d; ++c) x[j * d + c] = (*s.prefix)(j, c);
      RngStream rng(s.seed, k);
      const PathView path(s.grid, d, std::span<const double>(x, stride));
      for (std::size_t i = s.start; i < n; ++i) {
        for (std::size_t c = 0; c < d; ++c) dw[i * d + c] = sd * rng.gaussian();
        s.sigma.vector(i, path, sig);
        check_finite(sig, "sigma output", k, i);
        for (std::size_t c = 0; c < d; ++c) drive[c] = dw[i * d + c];
        if (s.control) {
          s.control->vector(i, path, lam);
          check_finite(lam, "control output", k, i);
          double norm2 = 0.0;
          for (double l : lam) norm2 += l * l;
          if (std::sqrt(norm2) > s.control->bound() * (1.0 + 1e-12))
            throw ValidationError("control", "|lambda| exceeds the declared bound L at path " +
                                                 std::to_string(k) + ", step " + std::to_string(i));
          for (std::size_t c = 0; c < d; ++c) drive[c] += lam[c] * h;
        }
        for (std::size_t r = 0; r < d; ++r) {
          double acc = 0.0;
          for (std::size_t c = 0; c < d; ++c) acc += sig[r * d + c] * drive[c];
          x[(i + 1) * d + r] = x[i * d + r] + acc;
        }
        check_finite({x + (i + 1) * d, d}, "state", k, i + 1);
      }
    }
  });
  return {std::move(values), std::move(increments)};
}

}  // namespace

PathEnsemble simulate_base(const AdaptedFunctional& sigma, const TimeGrid& grid, std::size_t count,
                           std::size_t dim, std::uint64_t seed) {
  auto [values, incs] = run({sigma, nullptr, grid, count, dim, seed});
  return {grid, dim, count, std::move(values), {}, seed, {MeasureKind::base, "", 0},
          std::move(incs), 0};
}

PathEnsemble simulate_drifted(const AdaptedFunctional& sigma, const AdaptedFunctional& control,
                              const TimeGrid& grid, std::size_t count, std::size_t dim,
                              std::uint64_t seed) {
  auto [values, incs] = run({sigma, &control, grid, count, dim, seed});
  return {grid, dim, count, std::move(values), {}, seed,
          {MeasureKind::drifted, control.name(), 0}, std::move(incs), 0};
}

std::vector<double> girsanov_weights(const AdaptedFunctional& control, const PathEnsemble& base) {
  control.require(Role::control, "control");
  if (base.tag().kind != MeasureKind::base)
    throw ValidationError("ensemble", "Girsanov weights need a base ensemble");
  if (!base.has_increments())
    throw ValidationError("ensemble", "missing driving-increment provenance");
  if (control.dim() != base.dim()) throw ValidationError("control", "dimension mismatch");
  const std::size_t n = base.steps(), d = base.dim();
  const double h = base.grid().spacing();
  std::vector<double> weights(base.size());
  parallel_for(base.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<double> lam(d);
    for (std::size_t k = begin; k < end; ++k) {
      const PathView path = base.path(k);
      double log_w = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        control.vector(i, path, lam);
        const auto dw = base.increment(k, i);
        double dot = 0.0, norm2 = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          dot += lam[c] * dw[c];
          norm2 += lam[c] * lam[c];
        }
        if (std::sqrt(norm2) > control.bound() * (1.0 + 1e-12))
          throw ValidationError("control", "|lambda| exceeds the declared bound L");
        log_w += dot - 0.5 * norm2 * h;
      }
      weights[k] = std::exp(log_w);
      if (!std::isfinite(weights[k])) throw NumericalError("Girsanov weight overflow", k);
    }
  });
  return weights;
}

PathEnsemble conditional_ensemble(const AdaptedFunctional& sigma, std::size_t i,
                                  const PathView& prefix, std::size_t count, std::uint64_t seed) {
  const std::size_t n = prefix.steps();
  if (i >= n) throw ValidationError("index", "conditioning index must be < n");
  for (std::size_t c = 0; c < prefix.dim(); ++c)
    if (prefix(0, c) != 0.0) throw ValidationError("prefix", "prefix must start at the origin");
  SimulationSpec spec{sigma, nullptr, prefix.grid(), count, prefix.dim(), seed, i, &prefix};
  // The first draw of every stream feeds step i.
  auto [values, incs] = run(spec);
  return {prefix.grid(), prefix.dim(), count, std::move(values), {}, seed,
          {MeasureKind::conditional, "", i}, std::move(incs), i};
}

}  // namespace ppde
