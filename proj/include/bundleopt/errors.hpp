#pragma once

#include <stdexcept>

namespace bundleopt {

/// Malformed or unreadable input (CSV rows, model files). CLI exit code 2.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Incompatible flags or unsupported requests. CLI exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Estimation pipeline failures (empty data, oversized bundles, ...).
struct EstimationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace bundleopt
