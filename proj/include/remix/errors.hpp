#ifndef REMIX_ERRORS_HPP_
#define REMIX_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace remix {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Missing, truncated or malformed input data.
class DataError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf reached a loss or parameter.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace remix

#endif  // REMIX_ERRORS_HPP_
