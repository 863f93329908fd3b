#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace corv {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid names, parameters or incompatible component combinations.
/// Carries every problem found, each prefixed with the offending field path.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message)
      : Error(message), issues_{message} {}
  explicit ConfigError(std::vector<std::string> issues)
      : Error(join(issues)), issues_(std::move(issues)) {}

  const std::vector<std::string>& issues() const noexcept { return issues_; }

 private:
  static std::string join(const std::vector<std::string>& issues) {
    std::string out;
    for (const auto& s : issues) {
      if (!out.empty()) out += "; ";
      out += s;
    }
    return out;
  }
  std::vector<std::string> issues_;
};

/// Argument outside the supported branch of a special function.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A non-finite or otherwise unusable intermediate value.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A chain update produced a non-finite state or could not be brought back
/// into the domain. `step` is the index of the failing update (0 when the
/// failure happened outside run_chain).
class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& message, double phi, double theta,
                  std::uint64_t step = 0)
      : NumericalError(message), phi_(phi), theta_(theta), step_(step) {}

  double phi() const noexcept { return phi_; }
  double theta() const noexcept { return theta_; }
  std::uint64_t step() const noexcept { return step_; }

 private:
  double phi_;
  double theta_;
  std::uint64_t step_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + message), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace corv
