#pragma once

// Numerical checks around viscosity solutions of semilinear path-dependent
// equations: mean-tangency membership of linear test processes, tangency
// points, pathwise (sub/super)martingale tests, punctual jets, pointwise
// residuals and comparison experiments.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppde/paths.hpp"
#include "ppde/regression.hpp"
#include "ppde/stopping.hpp"

namespace ppde {

/// Linear test process Q(t, omega) = alpha t + beta . omega_t.
struct TestJet {
  double alpha = 0.0;
  std::vector<double> beta;  // empty means zero

  AdaptedFunctional process(std::size_t dim) const;
};

struct JetEstimate {
  double alpha = 0.0;
  std::vector<double> beta;
  std::size_t window = 1;
  double alpha_std_error = 0.0;
  double alpha_dispersion = 0.0;  // spread of the one-step drift quotients
  double beta_dispersion = 0.0;   // spread of the per-step gradient averages
};

enum class Verdict { pass, fail, inconclusive };
std::string to_string(Verdict v);

struct CheckResult {
  std::string name;
  std::size_t point = 0;  // sample point id
  std::size_t index = 0;
  double time = 0.0;
  std::vector<double> state;  // omega_{t_index}
  double margin = 0.0;
  double std_error = 0.0;
  Verdict verdict = Verdict::inconclusive;
  std::string detail;
};

struct ViscosityReport {
  std::vector<CheckResult> checks;

  Verdict overall() const;
  double min_margin() const;
  nlohmann::json to_json() const;
  void write_csv(const std::filesystem::path& file) const;
};

/// A point (t_i, omega) with omega owned.
struct SamplePoint {
  std::size_t index = 0;
  DiscretePath path;
};

/// `count` points on independent sigma-paths, with index uniform in [lo, hi].
std::vector<SamplePoint> sample_points(const AdaptedFunctional& sigma, const TimeGrid& grid,
                                       std::size_t dim, std::size_t count, std::uint64_t seed,
                                       std::size_t lo, std::size_t hi);

/// Localising horizon min(t_i + max_steps h, first exit of the ball of `radius`).
struct HorizonRule {
  std::size_t max_steps = 1;
  double radius = std::numeric_limits<double>::infinity();
};

enum class JetSide { sub, super };

struct GapResult {
  double gap = 0.0;  // <= 0
  double std_error = 0.0;
  double tolerance = 0.0;
  bool member = false;
  double envelope = 0.0;  // Snell value of the reflected obstacle, diagnostic only
  double mean_tau = 0.0;
};

/// psi = phi - u at the point, over stopping rules tau in [t_i, H].
/// Sub side: gap = min_tau lower-E[psi_tau] - psi_i. Super side:
/// gap = psi_i - max_tau upper-E[psi_tau]. The optimum is found by a Snell
/// envelope on `count` conditional paths and re-evaluated along its stopping
/// rule on `count` further paths; the immediate stop keeps the gap
/// nonpositive. Membership iff gap >= -(3 se + 1e-6).
GapResult test_process_gap(const AdaptedFunctional& sigma, const AdaptedFunctional& u,
                           const AdaptedFunctional& phi, double bound, const SamplePoint& point,
                           HorizonRule horizon, JetSide side, std::size_t count,
                           std::uint64_t seed, const ConditionalExpectation& estimator);
GapResult test_process_gap(const AdaptedFunctional& sigma, const AdaptedFunctional& u,
                           const TestJet& jet, double bound, const SamplePoint& point,
                           HorizonRule horizon, JetSide side, std::size_t count,
                           std::uint64_t seed, const ConditionalExpectation& estimator);

/// -alpha - F(t_i, omega, u, sigma^T beta).
double subsolution_residual(const TestJet& jet, double u_value, const AdaptedFunctional& driver,
                            const AdaptedFunctional& sigma, std::size_t i, const PathView& omega);

struct TangencyResult {
  bool found = false;
  std::size_t path = 0;
  std::size_t index = 0;
  double time = 0.0;
  double gap = 0.0;  // Y - u at the returned point
  double precondition_margin = 0.0;  // u_0 - upper-E[u_H]
  double precondition_std_error = 0.0;
  std::string warning;
};

/// Snell envelope of X = u up to H; the lowest-numbered path whose first
/// contact is strictly before its horizon gives the point.
TangencyResult tangency_point(const AdaptedFunctional& u, double bound,
                              const StoppingRule& horizon, const PathEnsemble& ensemble,
                              const ConditionalExpectation& estimator, double tol_contact = 1e-9);

enum class MartingaleMode { p_sub, p_super, e_sub, e_super };
std::string to_string(MartingaleMode m);

/// Margin = E[u_H] - u_i (P-modes, bound ignored) or upper-E_L[u_H] - u_i
/// (E-modes) per point and horizon rule. Sub passes iff margin >= -3 se;
/// super iff margin <= 3 se.
ViscosityReport martingale_property_test(const AdaptedFunctional& sigma,
                                         const AdaptedFunctional& u, double bound,
                                         MartingaleMode mode,
                                         const std::vector<SamplePoint>& points,
                                         const std::vector<HorizonRule>& rules,
                                         std::size_t count, std::uint64_t seed,
                                         const ConditionalExpectation& estimator);

/// u_hat(t, omega) = u(t, omega) + int_0^t (L0 |u| + F0 + 1) ds, left Riemann sum.
/// `f0` is a scalar functional of (i, omega); pass nullptr for F0 = 0.
AdaptedFunctional compensated_candidate(const AdaptedFunctional& u, double l0,
                                        const AdaptedFunctional* f0);

/// Drift and gradient quotients of u on a conditional ensemble at the point.
JetEstimate punctual_jet_estimate(const AdaptedFunctional& sigma, const AdaptedFunctional& u,
                                  const SamplePoint& point, std::size_t window,
                                  std::size_t count, std::uint64_t seed,
                                  const ConditionalExpectation& estimator);

struct ComparisonPlan {
  std::size_t sample_paths = 20;
  /// Difference mode: jets of w = u - v and the residual -alpha - L|w| - L|sigma^T beta|.
  bool difference = false;
  double bound = 0.0;
  std::size_t jet_window = 5;
  std::size_t jet_paths = 2000;
  std::uint64_t seed = 0;
};

/// u and v are candidates (evaluated in closed form) or terminal payoffs
/// (solved as BSDEs with `driver` on the ensemble). Margins v - u are taken
/// on the first `sample_paths` paths at every grid index. Throws
/// ValidationError with the witness path when u_T > v_T on a sampled path.
ViscosityReport comparison_experiment(const AdaptedFunctional& u, const AdaptedFunctional& v,
                                      const AdaptedFunctional* driver,
                                      const AdaptedFunctional& sigma,
                                      const PathEnsemble& ensemble,
                                      const ConditionalExpectation& estimator,
                                      ComparisonPlan plan = {});

}  // namespace ppde
