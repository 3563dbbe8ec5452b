#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bmsmoe {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

// File was readable but its contents are not a supported image.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid argument or configuration value.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Patch or coordinate outside the image.
class BoundsError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf appeared in a gradient or loss.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class FittingError : public Error {
 public:
  FittingError(const std::string& what, std::size_t iteration)
      : Error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

}  // namespace bmsmoe
