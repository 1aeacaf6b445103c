#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "ppde/paths.hpp"

namespace ppde::test {

inline AdaptedFunctional constant_sigma(std::size_t d, double s) {
  return AdaptedFunctional::sigma(d, [d, s](std::size_t, const PathView&, std::span<double> out) {
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c) out[r * d + c] = r == c ? s : 0.0;
  });
}

inline AdaptedFunctional identity_sigma(std::size_t d = 1) { return constant_sigma(d, 1.0); }

inline AdaptedFunctional constant_control(std::size_t d, double value, double bound) {
  return AdaptedFunctional::control(
      d, bound, [value](std::size_t, const PathView&, std::span<double> out) {
        for (double& x : out) x = value;
      });
}

inline AdaptedFunctional zero_driver() {
  return AdaptedFunctional::driver(
      [](std::size_t, const PathView&, double, std::span<const double>) { return 0.0; });
}

inline AdaptedFunctional terminal_state() {
  return AdaptedFunctional::terminal([](const PathView& p) { return p(p.steps()); });
}

inline AdaptedFunctional terminal_square() {
  return AdaptedFunctional::terminal([](const PathView& p) {
    const double x = p(p.steps());
    return x * x;
  });
}

inline AdaptedFunctional terminal_sine() {
  return AdaptedFunctional::terminal([](const PathView& p) { return std::sin(p(p.steps())); });
}

struct Moments {
  double mean = 0.0;
  double se = 0.0;
};

inline Moments moments(std::span<const double> x) {
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

}  // namespace ppde::test
