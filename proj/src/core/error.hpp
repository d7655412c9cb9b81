#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace repsample {

// Status codes shared with the C API. Values are part of the ABI.
enum class Status : int {
    Ok = 0,
    InvalidArgument = 1,
    Config = 2,
    Io = 3,
    Domain = 4,
    Numeric = 5,
    Diverged = 6,
    Internal = 7,
};

class Error : public std::runtime_error {
  public:
    Error(Status status, const std::string &what) : std::runtime_error(what), status_(status) {}
    Status status() const noexcept { return status_; }

  private:
    Status status_;
};

class InvalidArgument : public Error {
  public:
    explicit InvalidArgument(const std::string &what) : Error(Status::InvalidArgument, what) {}
};

class ConfigError : public Error {
  public:
    explicit ConfigError(const std::string &what) : Error(Status::Config, what) {}
};

class IoError : public Error {
  public:
    explicit IoError(const std::string &what) : Error(Status::Io, what) {}
};

class DomainError : public Error {
  public:
    explicit DomainError(const std::string &what) : Error(Status::Domain, what) {}
};

class NumericError : public Error {
  public:
    explicit NumericError(const std::string &what) : Error(Status::Numeric, what) {}
};

// Non-finite loss or gradient during training; carries the failing step.
class TrainingDiverged : public Error {
  public:
    TrainingDiverged(std::size_t step, const std::string &what)
        : Error(Status::Diverged, "training diverged at step " + std::to_string(step) + ": " + what),
          step_(step) {}
    std::size_t step() const noexcept { return step_; }

  private:
    std::size_t step_;
};

} // namespace repsample
