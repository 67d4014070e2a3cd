#pragma once

#include <stdexcept>
#include <string>

namespace tsld {

/// Base class for every error raised by the library. `category()` is a short
/// machine-readable tag used by the CLI for its one-line error report.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* category() const noexcept { return "error"; }
};

class ShapeError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "shape"; }
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "contract"; }
};

class InputError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "input"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "config"; }
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row)
      : Error("row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }
  const char* category() const noexcept override { return "parse"; }

 private:
  std::size_t row_;
};

class FormatError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "format"; }
};

/// A value became NaN or infinite.
class NumericError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "numeric"; }
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t step, double last_loss)
      : Error(what + " (step " + std::to_string(step) +
              ", last finite loss " + std::to_string(last_loss) + ")"),
        step_(step),
        last_loss_(last_loss) {}
  std::size_t step() const noexcept { return step_; }
  double last_loss() const noexcept { return last_loss_; }
  const char* category() const noexcept override { return "training"; }

 private:
  std::size_t step_;
  double last_loss_;
};

/// Raised when ||h_t - h~_t|| is too small for a dependency measure to be
/// meaningful.
class DegenerateBaseline : public Error {
 public:
  explicit DegenerateBaseline(double norm)
      : Error("representation is indistinguishable from its zero-input "
              "baseline (norm " + std::to_string(norm) + ")"),
        norm_(norm) {}
  double norm() const noexcept { return norm_; }
  const char* category() const noexcept override { return "degenerate"; }

 private:
  double norm_;
};

}  // namespace tsld
