#pragma once

#include <stdexcept>
#include <string>

namespace lvs {

/// Base class of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument does not hold (bad lengths, invalid parameters, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// The geometric constraints admit no solution (e.g. spoofing distance unreachable).
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown during an iterative procedure.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration document. `key_path()` names the offending entry, e.g. "scenario.rsus[1]".
class ConfigError : public Error {
 public:
  ConfigError(std::string key_path, const std::string& what)
      : Error(key_path + ": " + what), key_path_(std::move(key_path)) {}

  const std::string& key_path() const noexcept { return key_path_; }

 private:
  std::string key_path_;
};

}  // namespace lvs
