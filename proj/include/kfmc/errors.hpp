#pragma once

#include <stdexcept>
#include <string>

namespace kfmc {

/// Bad shapes, out-of-range indices, invalid hyperparameters.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A solver produced non-finite values or a factorization failed.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, long iteration = -1)
      : std::runtime_error(iteration >= 0 ? what + " (iteration " + std::to_string(iteration) + ")"
                                          : what),
        iteration_(iteration) {}

  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

}  // namespace kfmc
