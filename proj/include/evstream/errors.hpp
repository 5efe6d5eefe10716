#pragma once

#include <stdexcept>
#include <string>

namespace evstream {

// Byte-level input that does not follow a wire layout: truncation, reserved
// bits set, unknown enum values.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Text input that does not parse (CSV rows, malformed numbers).
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Well-formed input that violates a domain invariant.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Chained payload whose predecessor object was not decoded; the caller must
// discard the object and everything after it in the same subgroup until the
// group resets.
struct DependencyError : std::runtime_error {
  explicit DependencyError(const std::string& what) : std::runtime_error(what) {}
};

// Scenario configuration errors: unknown keys, constraint violations.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Run log that cannot be aggregated into a report.
struct AggregationError : std::runtime_error {
  explicit AggregationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace evstream
