#pragma once

#include <stdexcept>
#include <string>

namespace fivestar {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: malformed files, values outside their declared domain, violated preconditions.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A fit or integral that could not be carried out (divergence, singular information, ...).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace fivestar
