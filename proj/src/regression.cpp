#include "ppde/regression.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/Dense>

#include "ppde/errors.hpp"
#include "ppde/parallel.hpp"

namespace ppde {

RegressionBasis::RegressionBasis(BasisConfig config) : config_(config) {
  if (config_.degree < 1) throw ValidationError("solver.degree", "basis degree must be >= 1");
  if (!(config_.ridge >= 0.0)) throw ValidationError("solver.ridge", "ridge must be >= 0");
}

RegressionBasis::RegressionBasis(std::size_t count, FeatureFn features, int degree, double ridge,
                                 std::string label)
    : RegressionBasis(BasisConfig{degree, ridge, false, false, false}) {
  custom_count_ = count;
  custom_ = std::move(features);
  label_ = std::move(label);
}

std::size_t RegressionBasis::raw_count(std::size_t dim) const {
  if (custom_) return custom_count_;
  return (config_.state ? dim : 0) + (config_.running_max ? 1 : 0) +
         (config_.running_integral ? dim : 0);
}

void RegressionBasis::raw_features(std::size_t i, const PathView& path,
                                   std::span<double> out) const {
  if (custom_) {
    custom_(i, path, out);
    return;
  }
  const std::size_t d = path.dim();
  std::size_t pos = 0;
  if (config_.state)
    for (std::size_t c = 0; c < d; ++c) out[pos++] = path(i, c);
  if (!config_.running_max && !config_.running_integral) return;
  // One pass for both path-dependent features.
  const double h = path.grid().spacing();
  const auto values = path.values();
  double peak = 0.0;
  std::size_t integral_pos = pos + (config_.running_max ? 1 : 0);
  if (config_.running_integral)
    for (std::size_t c = 0; c < d; ++c) out[integral_pos + c] = 0.0;
  for (std::size_t j = 0; j <= i; ++j) {
    const double* x = values.data() + j * d;
    if (config_.running_max) {
      double sq = 0.0;
      for (std::size_t c = 0; c < d; ++c) sq += x[c] * x[c];
      peak = std::max(peak, d == 1 ? std::abs(x[0]) : std::sqrt(sq));
    }
    if (config_.running_integral && j < i)
      for (std::size_t c = 0; c < d; ++c) out[integral_pos + c] += x[c];
  }
  if (config_.running_max) out[pos] = peak;
  if (config_.running_integral)
    for (std::size_t c = 0; c < d; ++c) out[integral_pos + c] *= h;
}

nlohmann::json RegressionBasis::describe() const {
  nlohmann::json j{{"kind", "polynomial"},
                   {"degree", config_.degree},
                   {"ridge", config_.ridge},
                   {"features", label_}};
  if (!custom_) {
    j["state"] = config_.state;
    j["running_max"] = config_.running_max;
    j["running_integral"] = config_.running_integral;
  }
  return j;
}

namespace {

using Exponents = std::vector<std::vector<int>>;

// All exponent tuples over m variables with total degree <= p. The first
// tuple is all zeros (the constant column).
void collect_monomials(std::size_t var, int left, std::vector<int>& cur, Exponents& out) {
  if (var == cur.size()) {
    out.push_back(cur);
    return;
  }
  for (int e = 0; e <= left; ++e) {
    cur[var] = e;
    collect_monomials(var + 1, left - e, cur, out);
  }
  cur[var] = 0;
}

Exponents monomials(std::size_t m, int p) {
  Exponents out;
  std::vector<int> cur(m, 0);
  collect_monomials(0, p, cur, out);
  return out;
}

bool all_equal(std::span<const double> targets, const std::vector<std::size_t>& rows) {
  const double first = targets[rows.front()];
  for (std::size_t r : rows)
    if (targets[r] != first) return false;
  return true;
}

std::vector<std::size_t> active_rows(std::size_t count, std::span<const unsigned char> active) {
  std::vector<std::size_t> rows;
  rows.reserve(count);
  for (std::size_t k = 0; k < count; ++k)
    if (active.empty() || active[k]) rows.push_back(k);
  return rows;
}

class RegressionProjector final : public StepProjector {
 public:
  RegressionProjector(std::vector<std::size_t> rows, Eigen::MatrixXd phi, Eigen::VectorXd w,
                      double ridge, std::size_t step)
      : rows_(std::move(rows)), phi_(std::move(phi)), w_(std::move(w)) {
    const Eigen::Index p = phi_.cols();
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
    if ((w_.array() == 1.0).all()) {
      gram.selfadjointView<Eigen::Lower>().rankUpdate(phi_.transpose());
    } else {
      const Eigen::MatrixXd root = phi_.array().colwise() * w_.array().sqrt();
      gram.selfadjointView<Eigen::Lower>().rankUpdate(root.transpose());
    }
    gram = gram.selfadjointView<Eigen::Lower>();
    for (Eigen::Index c = 1; c < p; ++c) gram(c, c) += ridge;
    if (!gram.allFinite()) throw RegressionError("non-finite normal equations", step, INFINITY);
    ldlt_.compute(gram);
    const auto diag = ldlt_.vectorD().cwiseAbs();
    const double lo = diag.minCoeff(), hi = diag.maxCoeff();
    condition_ = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (ldlt_.info() == Eigen::Success && lo > 0.0 && condition_ <= 1e15) return;

    // Near-singular (e.g. a running feature that moves on only a few active
    // paths): minimum-norm solution from the truncated eigendecomposition.
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    const auto& ev = eig.eigenvalues();
    const double top = ev.maxCoeff();
    if (eig.info() != Eigen::Success || !(top > 0.0))
      throw RegressionError("singular normal equations", step, condition_);
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(p);
    for (Eigen::Index c = 0; c < p; ++c)
      if (ev[c] > 1e-13 * top) inv[c] = 1.0 / ev[c];
    pinv_ = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
    truncated_ = true;
  }

  Projection project(std::span<const double> targets, std::span<double> out) const override {
    Projection result;
    if (all_equal(targets, rows_)) {
      const double c = targets[rows_.front()];
      for (std::size_t r : rows_) out[r] = c;
      result.coefficients.assign(static_cast<std::size_t>(phi_.cols()), 0.0);
      result.coefficients[0] = c;
      return result;
    }
    const Eigen::Index m = static_cast<Eigen::Index>(rows_.size());
    Eigen::VectorXd y(m);
    for (Eigen::Index r = 0; r < m; ++r) y[r] = targets[rows_[r]];
    const Eigen::VectorXd rhs = phi_.transpose() * (w_.array() * y.array()).matrix();
    const Eigen::VectorXd coef = truncated_ ? Eigen::VectorXd(pinv_ * rhs) : Eigen::VectorXd(ldlt_.solve(rhs));
    const Eigen::VectorXd fitted = phi_ * coef;
    double ss = 0.0;
    const double wsum = w_.sum();
    for (Eigen::Index r = 0; r < m; ++r) {
      if (!std::isfinite(fitted[r])) throw NumericalError("non-finite regression output", rows_[r]);
      out[rows_[r]] = fitted[r];
      ss += w_[r] * (y[r] - fitted[r]) * (y[r] - fitted[r]);
    }
    result.coefficients.assign(coef.data(), coef.data() + coef.size());
    result.residual_rms = wsum > 0.0 ? std::sqrt(ss / wsum) : 0.0;
    return result;
  }

  double condition() const override { return condition_; }
  std::size_t basis_size() const override { return static_cast<std::size_t>(phi_.cols()); }

 private:
  std::vector<std::size_t> rows_;
  Eigen::MatrixXd phi_;
  Eigen::VectorXd w_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
  Eigen::MatrixXd pinv_;
  bool truncated_ = false;
  double condition_ = 1.0;
};

class TreeProjector final : public StepProjector {
 public:
  TreeProjector(std::vector<std::size_t> rows, std::vector<std::vector<std::size_t>> groups,
                std::vector<double> weights)
      : rows_(std::move(rows)), groups_(std::move(groups)), weights_(std::move(weights)) {}

  Projection project(std::span<const double> targets, std::span<double> out) const override {
    Projection result;
    if (all_equal(targets, rows_)) {
      for (std::size_t r : rows_) out[r] = targets[rows_.front()];
      return result;
    }
    double ss = 0.0, wsum = 0.0;
    for (const auto& g : groups_) {
      double num = 0.0, den = 0.0;
      for (std::size_t k : g) {
        num += weights_[k] * targets[k];
        den += weights_[k];
      }
      double mean = 0.0;
      if (den > 0.0) {
        mean = num / den;
      } else {
        for (std::size_t k : g) mean += targets[k];
        mean /= static_cast<double>(g.size());
      }
      for (std::size_t k : g) {
        out[k] = mean;
        ss += weights_[k] * (targets[k] - mean) * (targets[k] - mean);
        wsum += weights_[k];
      }
    }
    result.residual_rms = wsum > 0.0 ? std::sqrt(ss / wsum) : 0.0;
    return result;
  }

 private:
  std::vector<std::size_t> rows_;
  std::vector<std::vector<std::size_t>> groups_;
  std::vector<double> weights_;
};

}  // namespace

std::shared_ptr<const RegressionEstimator::FeatureCache> RegressionEstimator::running_features(
    const PathEnsemble& ensemble) const {
  const std::lock_guard lock(cache_mutex_);
  const auto source = ensemble.shared_values();
  if (cache_ && cache_->count == ensemble.size() && cache_->source.lock() == source) return cache_;

  auto cache = std::make_shared<FeatureCache>();
  cache->source = source;
  cache->count = ensemble.size();
  const std::size_t N = ensemble.size(), n = ensemble.steps(), d = ensemble.dim();
  const std::size_t width = basis_.raw_count(d);
  const BasisConfig& cfg = basis_.config();
  const double h = ensemble.grid().spacing();
  cache->values.resize(N * (n + 1) * width);
  parallel_for(N, [&](std::size_t begin, std::size_t end) {
    std::vector<double> sum(d);
    for (std::size_t k = begin; k < end; ++k) {
      const auto path = ensemble.path(k);
      double peak = 0.0;
      std::fill(sum.begin(), sum.end(), 0.0);
      for (std::size_t i = 0; i <= n; ++i) {
        const auto x = path.point(i);
        double* out = cache->values.data() + (i * N + k) * width;
        std::size_t pos = 0;
        if (cfg.state)
          for (std::size_t c = 0; c < d; ++c) out[pos++] = x[c];
        if (cfg.running_max) {
          double sq = 0.0;
          for (std::size_t c = 0; c < d; ++c) sq += x[c] * x[c];
          peak = std::max(peak, d == 1 ? std::abs(x[0]) : std::sqrt(sq));
          out[pos++] = peak;
        }
        if (cfg.running_integral) {
          for (std::size_t c = 0; c < d; ++c) out[pos++] = sum[c] * h;
          for (std::size_t c = 0; c < d; ++c) sum[c] += x[c];
        }
      }
    }
  });
  cache_ = std::move(cache);
  return cache_;
}

std::unique_ptr<StepProjector> RegressionEstimator::fit(const PathEnsemble& ensemble,
                                                         std::size_t i,
                                                         std::span<const unsigned char> active) const {
  if (i > ensemble.steps()) throw ValidationError("index", "regression step beyond the grid");
  auto rows = active_rows(ensemble.size(), active);
  if (rows.empty()) throw ValidationError("active", "no active paths to regress on");

  const std::size_t m_raw = basis_.raw_count(ensemble.dim());
  const std::size_t m = rows.size();
  std::vector<double> raw(m * m_raw);
  const BasisConfig& cfg = basis_.config();
  const bool cached = !basis_.custom() && (cfg.running_max || cfg.running_integral);
  if (cached) {
    const auto cache = running_features(ensemble);
    const double* step = cache->values.data() + i * ensemble.size() * m_raw;
    for (std::size_t r = 0; r < m; ++r)
      std::copy_n(step + rows[r] * m_raw, m_raw, raw.data() + r * m_raw);
  } else {
    parallel_for(m, [&](std::size_t begin, std::size_t end) {
      for (std::size_t r = begin; r < end; ++r)
        basis_.raw_features(i, ensemble.path(rows[r]), {raw.data() + r * m_raw, m_raw});
    });
  }

  Eigen::VectorXd w(static_cast<Eigen::Index>(m));
  double wsum = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    w[static_cast<Eigen::Index>(r)] = ensemble.weight(rows[r]);
    wsum += ensemble.weight(rows[r]);
  }
  if (!(wsum > 0.0)) {
    // Only zero-weight paths remain active: weight them equally.
    w.setOnes();
    wsum = static_cast<double>(m);
  }

  // Standardise; drop features that are constant over the active paths.
  std::vector<std::size_t> kept;
  std::vector<double> mean, scale;
  for (std::size_t f = 0; f < m_raw; ++f) {
    double mu = 0.0;
    bool constant = true;
    for (std::size_t r = 0; r < m; ++r) {
      const double x = raw[r * m_raw + f];
      if (!std::isfinite(x)) throw NumericalError("non-finite basis feature", rows[r], i);
      mu += w[static_cast<Eigen::Index>(r)] * x;
      constant = constant && x == raw[f];
    }
    if (constant) continue;
    mu /= wsum;
    double var = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      const double dx = raw[r * m_raw + f] - mu;
      var += w[static_cast<Eigen::Index>(r)] * dx * dx;
    }
    const double sd = std::sqrt(var / wsum);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mu)))) continue;
    kept.push_back(f);
    mean.push_back(mu);
    scale.push_back(sd);
  }

  const Exponents exps = monomials(kept.size(), basis_.degree());
  const std::size_t p = exps.size();
  const Eigen::Index rows_m = static_cast<Eigen::Index>(m);
  Eigen::MatrixXd z(rows_m, static_cast<Eigen::Index>(kept.size()));
  for (std::size_t f = 0; f < kept.size(); ++f)
    for (std::size_t r = 0; r < m; ++r)
      z(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f)) =
          (raw[r * m_raw + kept[f]] - mean[f]) / scale[f];
  // Each non-constant monomial is an earlier one times a single feature.
  Eigen::MatrixXd phi(rows_m, static_cast<Eigen::Index>(p));
  phi.col(0).setOnes();
  for (std::size_t c = 1; c < p; ++c) {
    std::size_t f = 0;
    while (exps[c][f] == 0) ++f;
    std::vector<int> parent = exps[c];
    --parent[f];
    const auto it = std::find(exps.begin(), exps.begin() + static_cast<std::ptrdiff_t>(c), parent);
    const auto pc = static_cast<Eigen::Index>(it - exps.begin());
    phi.col(static_cast<Eigen::Index>(c)) =
        phi.col(pc).cwiseProduct(z.col(static_cast<Eigen::Index>(f)));
  }

  return std::make_unique<RegressionProjector>(std::move(rows), std::move(phi), std::move(w),
                                               basis_.ridge() * wsum, i);
}

std::unique_ptr<StepProjector> TreeEstimator::fit(const PathEnsemble& ensemble, std::size_t i,
                                                  std::span<const unsigned char> active) const {
  if (i > ensemble.steps()) throw ValidationError("index", "step beyond the grid");
  auto rows = active_rows(ensemble.size(), active);
  if (rows.empty()) throw ValidationError("active", "no active paths");
  const std::size_t d = ensemble.dim();
  std::map<std::vector<double>, std::vector<std::size_t>> by_prefix;
  for (std::size_t k : rows) {
    const auto v = ensemble.path(k).values();
    by_prefix[std::vector<double>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>((i + 1) * d))]
        .push_back(k);
  }
  std::vector<std::vector<std::size_t>> groups;
  groups.reserve(by_prefix.size());
  for (auto& [prefix, members] : by_prefix) groups.push_back(std::move(members));
  std::vector<double> weights(ensemble.weights().begin(), ensemble.weights().end());
  return std::make_unique<TreeProjector>(std::move(rows), std::move(groups), std::move(weights));
}

RegressionResult regress(const PathEnsemble& ensemble, std::size_t i,
                         std::span<const double> targets, const RegressionBasis& basis) {
  if (targets.size() != ensemble.size()) throw ValidationError("targets", "expected N targets");
  for (std::size_t k = 0; k < targets.size(); ++k)
    if (!std::isfinite(targets[k])) throw ValidationError("targets", "non-finite target");
  const RegressionEstimator estimator(basis);
  const auto projector = estimator.fit(ensemble, i, {});
  RegressionResult result;
  result.predictions.assign(ensemble.size(), 0.0);
  auto proj = projector->project(targets, result.predictions);
  result.coefficients = std::move(proj.coefficients);
  result.residual_rms = proj.residual_rms;
  result.condition = projector->condition();
  return result;
}

void estimate_z(const StepProjector& projector, const PathEnsemble& ensemble, std::size_t i,
                std::span<const double> next_values, std::span<const double> continuation,
                std::span<const unsigned char> active, std::span<double> z_out) {
  if (!ensemble.has_increments())
    throw ValidationError("ensemble", "Z estimation needs the driving increments");
  const std::size_t N = ensemble.size(), d = ensemble.dim();
  const double h = ensemble.grid().spacing();
  std::vector<double> target(N, 0.0), fitted(N, 0.0);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t k = 0; k < N; ++k)
      if (active.empty() || active[k])
        target[k] = (next_values[k] - continuation[k]) * ensemble.increment(k, i)[c] / h;
    projector.project(target, fitted);
    for (std::size_t k = 0; k < N; ++k)
      if (active.empty() || active[k]) z_out[k * d + c] = fitted[k];
  }
}

std::vector<double> estimate_z(const PathEnsemble& ensemble, std::size_t i,
                               std::span<const double> next_values, const RegressionBasis& basis) {
  if (i >= ensemble.steps()) throw ValidationError("index", "Z is defined for i < n");
  if (next_values.size() != ensemble.size())
    throw ValidationError("targets", "expected N targets");
  const RegressionEstimator estimator(basis);
  const auto projector = estimator.fit(ensemble, i, {});
  std::vector<double> continuation(ensemble.size());
  projector->project(next_values, continuation);
  std::vector<double> z(ensemble.size() * ensemble.dim(), 0.0);
  estimate_z(*projector, ensemble, i, next_values, continuation, {}, z);
  return z;
}

}  // namespace ppde
