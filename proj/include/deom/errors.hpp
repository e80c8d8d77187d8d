#pragma once

// Error taxonomy. Every failure mode the library reports maps to one of
// these types; the CLI translates them to exit codes.

#include <cstdint>
#include <stdexcept>
#include <string>

namespace deom {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent user input (config text, parameter ranges).
struct ConfigError : Error {
  explicit ConfigError(const std::string& what, int line = -1)
      : Error(line >= 0 ? "config error (line " + std::to_string(line) + "): " + what
                        : "config error: " + what),
        line(line) {}
  int line;
};

// Operand dimensions do not match (wrong orbital count, block shape, ...).
struct ShapeError : Error {
  using Error::Error;
};

// Requested hierarchy exceeds the configured memory budget.
struct CapacityError : Error {
  CapacityError(std::uint64_t count, std::uint64_t budget)
      : Error("hierarchy would need " + std::to_string(count) +
              " density-operator blocks, above the budget of " + std::to_string(budget)),
        count(count),
        budget(budget) {}
  std::uint64_t count, budget;
};

// Exponential-sum fit missed its accuracy target.
struct FitError : Error {
  FitError(double achieved, double target, int K)
      : Error("correlation fit with K=" + std::to_string(K) + " reached sup-error " +
              std::to_string(achieved) + ", above the target " + std::to_string(target)),
        achieved(achieved),
        target(target) {}
  double achieved, target;
};

// Iterative solver exhausted max_iter.
struct ConvergenceError : Error {
  ConvergenceError(const std::string& stage, double residual, int iters)
      : Error(stage + " did not converge after " + std::to_string(iters) +
              " iterations (residual " + std::to_string(residual) + ")"),
        residual(residual),
        iters(iters) {}
  double residual;
  int iters;
};

// Parameter combination sits on a genuine singularity of the formulas.
struct SingularityError : Error {
  using Error::Error;
};

}  // namespace deom
