#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "ppde/errors.hpp"
#include "ppde/regression.hpp"
#include "ppde/sde.hpp"
#include "ppde/snell.hpp"

namespace ppde {
namespace {

PathEnsemble brownian(std::size_t n, std::size_t N, std::uint64_t seed, std::size_t d = 1) {
  return simulate_base(test::identity_sigma(d), TimeGrid(1.0, n), N, d, seed);
}

TEST(Regress, ConstantTargetsAreExact) {
  const auto e = brownian(10, 2000, 1);
  const std::vector<double> t(e.size(), 0.731);
  const auto r = regress(e, 5, t, RegressionBasis{});
  for (double p : r.predictions) EXPECT_EQ(p, 0.731);
}

TEST(Regress, InSpanTargetsAreReproduced) {
  const auto e = brownian(20, 5000, 2);
  const std::size_t i = 12;
  std::vector<double> t(e.size());
  for (std::size_t k = 0; k < e.size(); ++k) {
    const double x = e.path(k)(i);
    t[k] = x * x * x - 2.0 * x + 0.3 * sup_norm(e.path(k), i) + 1.0;
  }
  BasisConfig exact;
  exact.ridge = 0.0;
  const auto r = regress(e, i, t, RegressionBasis(exact));
  for (std::size_t k = 0; k < e.size(); ++k)
    EXPECT_NEAR(r.predictions[k], t[k], 1e-8 * std::max(1.0, std::abs(t[k])));
  // The default ridge (1e-8 per unit weight) biases in-span fits by about 1e-6 relative.
  const auto ridged = regress(e, i, t, RegressionBasis{});
  for (std::size_t k = 0; k < e.size(); ++k)
    EXPECT_NEAR(ridged.predictions[k], t[k], 1e-5 * std::max(1.0, std::abs(t[k])));
}

TEST(Regress, BrownianMartingaleProperty) {
  const auto e = brownian(100, 100000, 3);
  const std::size_t i = 50;
  std::vector<double> t(e.size());
  for (std::size_t k = 0; k < e.size(); ++k) t[k] = e.path(k)(i + 1);
  const auto r = regress(e, i, t, RegressionBasis{});
  double ss = 0.0;
  for (std::size_t k = 0; k < e.size(); ++k) {
    const double d = r.predictions[k] - e.path(k)(i);
    ss += d * d;
  }
  EXPECT_LE(std::sqrt(ss / static_cast<double>(e.size())), 0.02);
}

TEST(Regress, PredictionDependsOnlyOnThePrefix) {
  const TimeGrid g(1.0, 20);
  const auto source = brownian(20, 1, 4);
  const auto omega = source.path(0);
  const auto base = brownian(20, 3000, 5);
  // Half the paths share omega's prefix up to i; their predictions must coincide.
  const std::size_t i = 8;
  const auto cond = conditional_ensemble(test::identity_sigma(), i, omega, 1500, 6);
  std::vector<double> values(base.values().begin(), base.values().begin() + 1500 * 21);
  values.insert(values.end(), cond.values().begin(), cond.values().end());
  PathEnsemble mixed(g, 1, 3000, values, std::vector<double>(3000, 1.0), 1, {});
  std::vector<double> t(3000);
  for (std::size_t k = 0; k < 3000; ++k) t[k] = std::sin(mixed.path(k)(20));
  const auto r = regress(mixed, i, t, RegressionBasis{});
  for (std::size_t k = 1501; k < 3000; ++k) EXPECT_EQ(r.predictions[k], r.predictions[1500]);
}

TEST(Regress, ZeroWeightsDropPaths) {
  const auto e = brownian(10, 4000, 7);
  std::vector<double> w(e.size());
  for (std::size_t k = 0; k < e.size(); ++k) w[k] = k % 2 ? 0.0 : 1.0;
  const auto weighted = e.with_weights(w);
  std::vector<double> even_values;
  const std::size_t stride = 11;
  for (std::size_t k = 0; k < e.size(); k += 2)
    even_values.insert(even_values.end(), e.values().begin() + k * stride,
                       e.values().begin() + (k + 1) * stride);
  PathEnsemble even(e.grid(), 1, e.size() / 2, even_values, std::vector<double>(e.size() / 2, 1.0), 1, {});
  std::vector<double> t(e.size()), te(e.size() / 2);
  for (std::size_t k = 0; k < e.size(); ++k) t[k] = std::exp(e.path(k)(10));
  for (std::size_t k = 0; k < te.size(); ++k) te[k] = t[2 * k];
  BasisConfig cfg;
  cfg.ridge = 0.0;
  const auto a = regress(weighted, 6, t, RegressionBasis(cfg));
  const auto b = regress(even, 6, te, RegressionBasis(cfg));
  for (std::size_t k = 0; k < te.size(); ++k)
    EXPECT_NEAR(a.predictions[2 * k], b.predictions[k], 1e-9 * std::max(1.0, std::abs(b.predictions[k])));
}

TEST(Regress, CustomFeatureMap) {
  const auto e = brownian(10, 3000, 8);
  RegressionBasis cos_basis(1, [](std::size_t i, const PathView& p, std::span<double> out) {
    out[0] = std::cos(p(i));
  }, 2, 0.0);
  std::vector<double> t(e.size());
  for (std::size_t k = 0; k < e.size(); ++k) t[k] = 2.0 * std::pow(std::cos(e.path(k)(4)), 2) - 1.0;
  const auto r = regress(e, 4, t, cos_basis);
  for (std::size_t k = 0; k < e.size(); ++k) EXPECT_NEAR(r.predictions[k], t[k], 1e-9);
}

TEST(Regress, Errors) {
  const auto e = brownian(5, 100, 9);
  std::vector<double> t(e.size(), 1.0);
  t[3] = NAN;
  EXPECT_THROW(regress(e, 2, t, RegressionBasis{}), ValidationError);
  EXPECT_THROW(regress(e, 2, std::vector<double>(5, 0.0), RegressionBasis{}), ValidationError);
  BasisConfig bad;
  bad.degree = 0;
  EXPECT_THROW(RegressionBasis{bad}, ValidationError);
}

TEST(EstimateZ, ConstantTargetGivesZero) {
  const auto e = brownian(10, 2000, 10);
  const auto z = estimate_z(e, 3, std::vector<double>(e.size(), 4.0), RegressionBasis{});
  for (double v : z) EXPECT_EQ(v, 0.0);
}

TEST(EstimateZ, BrownianIntegrandIsOne) {
  const auto e = brownian(100, 100000, 11);
  const std::size_t i = 40;
  std::vector<double> y(e.size());
  for (std::size_t k = 0; k < e.size(); ++k) y[k] = e.path(k)(i + 1);
  const auto z = estimate_z(e, i, y, RegressionBasis{});
  const auto m = test::moments(z);
  EXPECT_NEAR(m.mean, 1.0, 0.05);
}

TEST(EstimateZ, SquareHasIntegrandTwiceTheState) {
  const auto e = brownian(100, 100000, 12);
  const std::size_t i = 60;
  std::vector<double> y(e.size());
  for (std::size_t k = 0; k < e.size(); ++k) y[k] = std::pow(e.path(k)(i + 1), 2);
  const auto z = estimate_z(e, i, y, RegressionBasis{});
  // Least-squares slope of Z on omega_{t_i}.
  double sxz = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < e.size(); ++k) {
    sxz += e.path(k)(i) * z[k];
    sxx += e.path(k)(i) * e.path(k)(i);
  }
  EXPECT_NEAR(sxz / sxx, 2.0, 0.2);
}

TEST(EstimateZ, MultiDimensional) {
  const auto e = brownian(50, 50000, 13, 2);
  const std::size_t i = 20;
  std::vector<double> y(e.size());
  for (std::size_t k = 0; k < e.size(); ++k) y[k] = 2.0 * e.path(k)(i + 1, 0) - e.path(k)(i + 1, 1);
  const auto z = estimate_z(e, i, y, RegressionBasis{});
  double z0 = 0.0, z1 = 0.0;
  for (std::size_t k = 0; k < e.size(); ++k) {
    z0 += z[2 * k];
    z1 += z[2 * k + 1];
  }
  EXPECT_NEAR(z0 / e.size(), 2.0, 0.1);
  EXPECT_NEAR(z1 / e.size(), -1.0, 0.05);
}

TEST(TreeEstimator, AveragesChildrenExactly) {
  const double h = 0.25;
  const auto tree = tree_ensemble(3, h);
  ASSERT_EQ(tree.size(), 8u);
  std::vector<double> t(8);
  for (std::size_t k = 0; k < 8; ++k) t[k] = std::pow(tree.path(k)(3), 2);
  TreeEstimator est;
  std::vector<double> out(8);
  est.fit(tree, 2, {})->project(t, out);
  for (std::size_t k = 0; k < 8; ++k) {
    const double x = tree.path(k)(2);
    EXPECT_NEAR(out[k], x * x + h, 1e-15);
  }
  est.fit(tree, 0, {})->project(t, out);
  for (double v : out) EXPECT_NEAR(v, 3 * h, 1e-15);
}

}  // namespace
}  // namespace ppde
