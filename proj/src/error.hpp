#pragma once

#include <stdexcept>
#include <string>

namespace aid {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents or ranks disagree with what an operation needs.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A configuration value is out of its legal domain.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A file on disk does not follow the expected binary or text layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace aid
