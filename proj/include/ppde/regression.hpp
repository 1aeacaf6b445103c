#pragma once

// Conditional-expectation estimators used by the backward solvers: weighted
// ridge least squares on adapted path features, and an exact estimator for
// tree-valued ensembles.

#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppde/paths.hpp"

namespace ppde {

/// Raw adapted features at (i, path). Must only read points 0..i.
using FeatureFn = std::function<void(std::size_t, const PathView&, std::span<double>)>;

struct BasisConfig {
  int degree = 3;
  /// Ridge strength per unit of total weight (1e-8 * N for unit weights).
  double ridge = 1e-8;
  bool state = true;
  bool running_max = true;
  bool running_integral = true;
};

/// Polynomial basis of total degree <= p in standardised adapted features.
/// Default features: state components, running max |omega|_{t_i}, and the
/// left-Riemann running integral of omega. The constant is always included
/// and is never penalised.
class RegressionBasis {
 public:
  explicit RegressionBasis(BasisConfig config = {});
  /// Custom feature map with `count` raw features.
  RegressionBasis(std::size_t count, FeatureFn features, int degree = 3, double ridge = 1e-8,
                  std::string label = "custom");

  const BasisConfig& config() const noexcept { return config_; }
  int degree() const noexcept { return config_.degree; }
  double ridge() const noexcept { return config_.ridge; }

  bool custom() const noexcept { return static_cast<bool>(custom_); }
  std::size_t raw_count(std::size_t dim) const;
  void raw_features(std::size_t i, const PathView& path, std::span<double> out) const;

  nlohmann::json describe() const;

 private:
  BasisConfig config_;
  std::size_t custom_count_ = 0;
  FeatureFn custom_;
  std::string label_ = "default";
};

/// Result of projecting one target vector at a fixed step.
struct Projection {
  std::vector<double> coefficients;  // empty for non-parametric estimators
  double residual_rms = 0.0;
};

/// Conditional expectation given F_{t_i}, restricted to the active paths of
/// one step. project() may be called many times with different targets.
class StepProjector {
 public:
  virtual ~StepProjector() = default;
  /// targets and out have one entry per ensemble path; entries of inactive
  /// paths are ignored and left untouched. Constant targets are reproduced
  /// exactly.
  virtual Projection project(std::span<const double> targets, std::span<double> out) const = 0;
  virtual double condition() const { return 1.0; }
  virtual std::size_t basis_size() const { return 0; }
};

class ConditionalExpectation {
 public:
  virtual ~ConditionalExpectation() = default;
  /// `active` has one flag per path (empty = all paths). Active paths that
  /// carry zero total weight are weighted equally.
  virtual std::unique_ptr<StepProjector> fit(const PathEnsemble& ensemble, std::size_t i,
                                             std::span<const unsigned char> active) const = 0;
  virtual nlohmann::json describe() const = 0;
};

class RegressionEstimator final : public ConditionalExpectation {
 public:
  explicit RegressionEstimator(RegressionBasis basis = RegressionBasis{}) : basis_(std::move(basis)) {}
  RegressionEstimator(const RegressionEstimator& other) : basis_(other.basis_) {}

  std::unique_ptr<StepProjector> fit(const PathEnsemble& ensemble, std::size_t i,
                                     std::span<const unsigned char> active) const override;
  nlohmann::json describe() const override { return basis_.describe(); }
  const RegressionBasis& basis() const noexcept { return basis_; }

 private:
  // Default raw features of the most recent ensemble for every step, computed
  // in one pass per path. Time-major: step i holds N rows of raw_count values.
  struct FeatureCache {
    std::weak_ptr<const std::vector<double>> source;
    std::size_t count = 0;
    std::vector<double> values;
  };
  std::shared_ptr<const FeatureCache> running_features(const PathEnsemble& ensemble) const;

  RegressionBasis basis_;
  mutable std::mutex cache_mutex_;
  mutable std::shared_ptr<const FeatureCache> cache_;
};

/// Exact conditional expectation: averages over paths sharing the same
/// prefix 0..i. Intended for tree-valued ensembles where every node is
/// represented.
class TreeEstimator final : public ConditionalExpectation {
 public:
  std::unique_ptr<StepProjector> fit(const PathEnsemble& ensemble, std::size_t i,
                                     std::span<const unsigned char> active) const override;
  nlohmann::json describe() const override { return {{"kind", "exact-tree"}}; }
};

struct RegressionResult {
  std::vector<double> predictions;
  std::vector<double> coefficients;
  double residual_rms = 0.0;
  double condition = 1.0;
};

/// Weighted ridge regression of targets on the basis at step i (all paths).
RegressionResult regress(const PathEnsemble& ensemble, std::size_t i,
                         std::span<const double> targets, const RegressionBasis& basis);

/// Z_i ~ E[(Y_{i+1} - C_i) dW_i | F_{t_i}] / h, N x d row-major, where C_i is
/// the fitted continuation. This is the integrand against the driving noise.
std::vector<double> estimate_z(const PathEnsemble& ensemble, std::size_t i,
                               std::span<const double> next_values, const RegressionBasis& basis);

/// Same, with an existing projector and continuation (used by the solvers).
void estimate_z(const StepProjector& projector, const PathEnsemble& ensemble, std::size_t i,
                std::span<const double> next_values, std::span<const double> continuation,
                std::span<const unsigned char> active, std::span<double> z_out);

}  // namespace ppde
