#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ppde {

/// Bad input: shapes, ranges, roles, or a violated precondition.
class ValidationError : public std::invalid_argument {
 public:
  ValidationError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A non-finite value or a failed solve in the middle of a computation.
/// Carries the (path, step) location when one is known.
class NumericalError : public std::runtime_error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  NumericalError(const std::string& what, std::size_t path = npos, std::size_t step = npos)
      : std::runtime_error(describe(what, path, step)), path_(path), step_(step) {}

  std::size_t path() const noexcept { return path_; }
  std::size_t step() const noexcept { return step_; }

 private:
  static std::string describe(const std::string& what, std::size_t path, std::size_t step) {
    std::string s = what;
    if (path != npos) s += " (path " + std::to_string(path);
    if (step != npos) s += (path != npos ? ", step " : " (step ") + std::to_string(step);
    if (path != npos || step != npos) s += ")";
    return s;
  }

  std::size_t path_;
  std::size_t step_;
};

/// Normal equations could not be solved even after ridge regularisation.
class RegressionError : public NumericalError {
 public:
  RegressionError(const std::string& what, std::size_t step, double condition)
      : NumericalError(what + " [condition estimate " + std::to_string(condition) + "]",
                       npos, step),
        condition_(condition) {}
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

}  // namespace ppde
