#pragma once

#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace nlsip {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid model, grid or solver parameter. The message names the offending quantity.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Iterative method stopped without reaching its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_residual)
      : Error(what), last_residual_(last_residual) {}
  [[nodiscard]] double last_residual() const noexcept { return last_residual_; }

 private:
  double last_residual_;
};

/// Non-finite values, step-size underflow, or a discretisation that cannot resolve the data.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Root or bracket search failed.
class BracketError : public Error {
 public:
  using Error::Error;
};

/// Requested problem has no solution (e.g. constrained minimisation above the critical mass).
class NonexistenceError : public Error {
 public:
  using Error::Error;
};

using WarningHandler = std::function<void(std::string_view)>;

inline WarningHandler& warning_handler() {
  static WarningHandler handler = [](std::string_view msg) {
    std::cerr << "nlsip warning: " << msg << '\n';
  };
  return handler;
}

inline void warn(std::string_view msg) {
  if (auto& h = warning_handler()) h(msg);
}

}  // namespace nlsip
