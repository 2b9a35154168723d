#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fairdisc {

enum class ErrorKind {
  Configuration,
  Data,
  MeasurementUndefined,
  ContractViolation,
  Capacity,
  Training,
  MetricUndefined,
  Io,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Single exception type for the library; `kind()` tells callers (and the CLI
/// exit-code mapping) what went wrong.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// Same kind, message prefixed with `context: `.
  Error annotated(std::string_view context) const;

 private:
  ErrorKind kind_;
};

[[noreturn]] void throw_error(ErrorKind kind, const std::string& message);

}  // namespace fairdisc
