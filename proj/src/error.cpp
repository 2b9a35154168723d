#include "fairdisc/error.hpp"

namespace fairdisc {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Configuration:
      return "configuration error";
    case ErrorKind::Data:
      return "data error";
    case ErrorKind::MeasurementUndefined:
      return "measurement undefined";
    case ErrorKind::ContractViolation:
      return "contract violation";
    case ErrorKind::Capacity:
      return "capacity error";
    case ErrorKind::Training:
      return "training error";
    case ErrorKind::MetricUndefined:
      return "metric undefined";
    case ErrorKind::Io:
      return "io error";
  }
  return "error";
}

Error Error::annotated(std::string_view context) const {
  return Error(kind_, std::string(context) + ": " + what());
}

void throw_error(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace fairdisc
