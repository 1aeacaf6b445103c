#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "ppde/errors.hpp"
#include "ppde/parallel.hpp"
#include "ppde/regression.hpp"
#include "ppde/sde.hpp"
#include "ppde/stopping.hpp"

namespace ppde {
namespace {

using test::moments;

std::vector<double> terminal_values(const PathEnsemble& e, std::size_t c = 0) {
  std::vector<double> v(e.size());
  for (std::size_t k = 0; k < e.size(); ++k) v[k] = e.path(k)(e.steps(), c);
  return v;
}

TEST(RngStream, PureFunctionOfSeedAndPath) {
  RngStream a(42, 7), b(42, 7), c(42, 8), d(43, 7);
  const double a0 = a.gaussian();
  EXPECT_EQ(a0, b.gaussian());
  EXPECT_NE(a0, c.gaussian());
  EXPECT_NE(a0, d.gaussian());
}

TEST(SimulateBase, IdentityDiffusionReproducesIncrements) {
  const TimeGrid g(1.0, 8);
  const auto e = simulate_base(test::identity_sigma(2), g, 50, 2, 3);
  for (std::size_t k = 0; k < e.size(); ++k)
    for (std::size_t i = 0; i < g.steps(); ++i)
      for (std::size_t c = 0; c < 2; ++c)
        EXPECT_EQ(e.path(k)(i + 1, c), e.path(k)(i, c) + e.increment(k, i)[c]);
  EXPECT_EQ(e.tag().kind, MeasureKind::base);
  for (double w : e.weights()) EXPECT_EQ(w, 1.0);
}

TEST(SimulateBase, DegenerateDiffusionGivesZeroPaths) {
  const auto e = simulate_base(test::constant_sigma(1, 0.0), TimeGrid(1.0, 10), 100, 1, 1);
  for (double v : e.values()) EXPECT_EQ(v, 0.0);
}

TEST(SimulateBase, FirstStepVarianceIsSpacing) {
  const TimeGrid g(1.0, 100);
  const auto e = simulate_base(test::identity_sigma(), g, 100000, 1, 21);
  std::vector<double> sq(e.size());
  for (std::size_t k = 0; k < e.size(); ++k) sq[k] = e.path(k)(1) * e.path(k)(1);
  const auto m = moments(sq);
  EXPECT_LE(std::abs(m.mean - g.spacing()), 3 * m.se);
}

TEST(SimulateBase, IndependentOfThreadCount) {
  const TimeGrid g(1.0, 20);
  const auto sigma = AdaptedFunctional::sigma(1, [](std::size_t i, const PathView& p, std::span<double> o) {
    o[0] = 1 + 0.5 * std::tanh(sup_norm(p, i));
  });
  set_thread_count(1);
  const auto a = simulate_base(sigma, g, 3000, 1, 9);
  set_thread_count(4);
  const auto b = simulate_base(sigma, g, 3000, 1, 9);
  set_thread_count(1);
  EXPECT_EQ(a.values(), b.values());
  EXPECT_EQ(a.increments(), b.increments());
}

TEST(SimulateBase, Errors) {
  EXPECT_THROW(simulate_base(test::identity_sigma(), TimeGrid(1.0, 3), 0, 1, 1), ValidationError);
  const auto blowup = AdaptedFunctional::sigma(1, [](std::size_t i, const PathView&, std::span<double> o) {
    o[0] = i == 2 ? NAN : 1.0;
  });
  try {
    simulate_base(blowup, TimeGrid(1.0, 3), 4, 1, 1);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.step(), 2u);
    EXPECT_NE(e.path(), NumericalError::npos);
  }
}

TEST(SimulateDrifted, ZeroControlIsBitIdenticalToBase) {
  const TimeGrid g(1.0, 16);
  const auto base = simulate_base(test::identity_sigma(2), g, 500, 2, 5);
  const auto drifted =
      simulate_drifted(test::identity_sigma(2), test::constant_control(2, 0.0, 1.0), g, 500, 2, 5);
  EXPECT_EQ(base.values(), drifted.values());
  EXPECT_EQ(drifted.tag().kind, MeasureKind::drifted);
}

TEST(SimulateDrifted, ConstantDriftShiftsMean) {
  const auto e = simulate_drifted(test::identity_sigma(), test::constant_control(1, 0.3, 0.5),
                                  TimeGrid(1.0, 50), 100000, 1, 8);
  const auto m = moments(terminal_values(e));
  EXPECT_LE(std::abs(m.mean - 0.3), 3 * m.se);
}

TEST(SimulateDrifted, DegenerateDiffusionKillsDrift) {
  const auto e = simulate_drifted(test::constant_sigma(1, 0.0), test::constant_control(1, 0.4, 0.5),
                                  TimeGrid(1.0, 10), 100, 1, 8);
  for (double v : e.values()) EXPECT_EQ(v, 0.0);
}

TEST(SimulateDrifted, RejectsControlAboveBound) {
  EXPECT_THROW(simulate_drifted(test::identity_sigma(), test::constant_control(1, 0.6, 0.5),
                                TimeGrid(1.0, 10), 10, 1, 8),
               ValidationError);
}

TEST(Girsanov, ZeroControlGivesUnitWeights) {
  const auto base = simulate_base(test::identity_sigma(), TimeGrid(1.0, 10), 1000, 1, 2);
  for (double w : girsanov_weights(test::constant_control(1, 0.0, 1.0), base)) EXPECT_EQ(w, 1.0);
}

TEST(Girsanov, WeightsHaveUnitMean) {
  const auto base = simulate_base(test::identity_sigma(), TimeGrid(1.0, 50), 100000, 1, 3);
  const auto w = girsanov_weights(test::constant_control(1, 0.3, 0.5), base);
  const auto m = moments(w);
  EXPECT_LE(std::abs(m.mean - 1.0), 3 * m.se);
  for (double x : w) EXPECT_GT(x, 0.0);
}

TEST(Girsanov, WeightedBaseMatchesDriftedSimulation) {
  const TimeGrid g(1.0, 50);
  const std::size_t N = 100000;
  const auto control = test::constant_control(1, 0.3, 0.5);
  const auto base = simulate_base(test::identity_sigma(), g, N, 1, 4);
  const auto w = girsanov_weights(control, base);
  const auto drifted = simulate_drifted(test::identity_sigma(), control, g, N, 1, 4);
  for (auto payoff : {+[](double x) { return x; }, +[](double x) { return std::sin(x); }}) {
    std::vector<double> a(N), b(N);
    const auto xb = terminal_values(base), xd = terminal_values(drifted);
    for (std::size_t k = 0; k < N; ++k) {
      a[k] = w[k] * payoff(xb[k]);
      b[k] = payoff(xd[k]);
    }
    const auto ma = moments(a), mb = moments(b);
    EXPECT_LE(std::abs(ma.mean - mb.mean), 3 * std::hypot(ma.se, mb.se));
  }
}

TEST(Girsanov, RequiresIncrements) {
  const TimeGrid g(1.0, 2);
  PathEnsemble bare(g, 1, 1, {0, 0.1, 0.2}, {1.0}, 1, {});
  EXPECT_THROW(girsanov_weights(test::constant_control(1, 0.1, 1.0), bare), ValidationError);
}

TEST(Girsanov, CompensatedIncrementsHaveZeroConditionalMean) {
  // Regress the compensated increment on the path features at t_i; an
  // uncompensated drift would leave a conditional mean of lambda h = 0.04.
  const TimeGrid g(1.0, 10);
  const double lambda = 0.4;
  const auto e = simulate_drifted(test::identity_sigma(), test::constant_control(1, lambda, 0.5), g,
                                  200000, 1, 6);
  for (std::size_t i : {0u, 4u, 9u}) {
    std::vector<double> comp(e.size());
    for (std::size_t k = 0; k < e.size(); ++k)
      comp[k] = e.path(k)(i + 1) - e.path(k)(i) - lambda * g.spacing();
    const auto fit = regress(e, i, comp, RegressionBasis{});
    double ss = 0.0;
    for (double p : fit.predictions) ss += p * p;
    EXPECT_LE(std::sqrt(ss / static_cast<double>(e.size())), 0.25 * lambda * g.spacing()) << i;
  }
}

TEST(ConditionalEnsemble, AtZeroMatchesBase) {
  const TimeGrid g(1.0, 12);
  const auto base = simulate_base(test::identity_sigma(), g, 200, 1, 13);
  const auto cond = conditional_ensemble(test::identity_sigma(), 0, base.path(0), 200, 13);
  EXPECT_EQ(base.values(), cond.values());
  EXPECT_EQ(cond.tag().kind, MeasureKind::conditional);
}

TEST(ConditionalEnsemble, PrefixIsCopiedAndMeanIsPreserved) {
  const TimeGrid g(1.0, 40);
  const auto source = simulate_base(test::identity_sigma(), g, 1, 1, 99);
  const auto omega = source.path(0);
  const std::size_t i = 17;
  const auto cond = conditional_ensemble(test::identity_sigma(), i, omega, 100000, 5);
  for (std::size_t k = 0; k < cond.size(); k += 997)
    for (std::size_t j = 0; j <= i; ++j) EXPECT_EQ(cond.path(k)(j), omega(j));
  EXPECT_EQ(cond.first_random_step(), i);
  const auto m = moments(terminal_values(cond));
  EXPECT_LE(std::abs(m.mean - omega(i)), 3 * m.se);
  EXPECT_THROW(conditional_ensemble(test::identity_sigma(), 40, omega, 10, 5), ValidationError);
}

TEST(ConditionalEnsemble, UsesShiftedCoefficient) {
  // sigma depends on the running max, so the prefix must enter the suffix dynamics.
  const TimeGrid g(1.0, 4);
  const auto sigma = AdaptedFunctional::sigma(1, [](std::size_t i, const PathView& p, std::span<double> o) {
    o[0] = sup_norm(p, i) > 5.0 ? 0.0 : 1.0;
  });
  const auto omega = DiscretePath(g, 1, {0, 6, 6, 6, 6});
  const auto cond = conditional_ensemble(sigma, 1, omega, 50, 1);
  for (std::size_t k = 0; k < cond.size(); ++k) EXPECT_EQ(cond.path(k)(4), 6.0);
}

TEST(StoppingRule, LocalizingRule) {
  const TimeGrid g(1.0, 4);
  const DiscretePath p(g, 1, {0, 0.5, 1.2, 0.1, 3.0});
  PathEnsemble e(g, 1, 1, p.values(), {1.0}, 1, {});
  EXPECT_EQ(StoppingRule::localizing(e, 0, 4, 1.0)[0], 2u);
  EXPECT_EQ(StoppingRule::localizing(e, 0, 1, 1.0)[0], 1u);
  EXPECT_EQ(StoppingRule::localizing(e, 2, 10, 2.0)[0], 4u);
  EXPECT_EQ(StoppingRule::localizing(e, 1, 10)[0], 4u);
  EXPECT_THROW(StoppingRule::localizing(e, 5, 1), ValidationError);
}

TEST(StoppingRule, FirstHitRespectsHorizon) {
  const TimeGrid g(1.0, 4);
  const DiscretePath p(g, 1, {0, 0.5, 1.2, 0.1, 3.0});
  PathEnsemble e(g, 1, 1, p.values(), {1.0}, 1, {});
  const auto hit = [](std::size_t i, const PathView& w) { return w(i) > 1.0; };
  EXPECT_EQ(StoppingRule::first_hit(e, hit)[0], 2u);
  const auto h = StoppingRule::fixed(1, 1);
  const auto capped = StoppingRule::first_hit(e, hit, 0, &h);
  EXPECT_EQ(capped[0], 1u);
  EXPECT_TRUE(capped.bounded_by(h));
  EXPECT_TRUE(probe_predicate_adaptedness(hit, g, 1, 3));
  EXPECT_FALSE(probe_predicate_adaptedness(
      [](std::size_t i, const PathView& w) { return w(w.steps()) > w(i); }, g, 1, 3));
}

}  // namespace
}  // namespace ppde
