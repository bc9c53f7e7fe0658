#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace svv {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad inputs and violated preconditions.
struct InvalidArgument : Error {
  using Error::Error;
};

// Configuration rejected at load time; carries the offending field.
struct ValidationError : InvalidArgument {
  ValidationError(std::string field_, const std::string& what)
      : InvalidArgument(field_.empty() ? what : field_ + ": " + what),
        field(std::move(field_)) {}
  std::string field;
};

// Numerical failures: non-convergence, out-of-band prices, insufficient signal.
struct NumericalError : Error {
  using Error::Error;
};

// Path integration failure with location context.
struct IntegrationError : NumericalError {
  IntegrationError(const std::string& what, std::uint64_t path_index_, std::size_t step_)
      : NumericalError(what + " (path " + std::to_string(path_index_) + ", step " +
                       std::to_string(step_) + ")"),
        path_index(path_index_),
        step(step_) {}
  std::uint64_t path_index = 0;
  std::size_t step = 0;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace svv
