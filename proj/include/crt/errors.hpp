#pragma once

#include <stdexcept>
#include <string>

namespace crt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Weighted Gram matrix (or cluster-level design) is rank deficient.
class SingularDesign : public Error {
 public:
  using Error::Error;
};

/// m <= p + 2, so the m/(m-p-2) or RSS/(m-p-2) factors are undefined.
class DegreesOfFreedom : public Error {
 public:
  using Error::Error;
};

class SingularCovariance : public Error {
 public:
  using Error::Error;
};

class InvalidPi : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class BadSize : public Error {
 public:
  using Error::Error;
};

class NoConvergedReps : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class InconsistentTreatment : public Error {
 public:
  using Error::Error;
};

class EmptyDataset : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace crt
