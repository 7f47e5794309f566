#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace procgraph {

// Error taxonomy. The CLI maps these onto exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unreadable input stream or file.
struct IngestError : Error {
  using Error::Error;
};

// Invalid configuration (bad encoder sizes, degenerate episode, ...).
struct ConfigError : Error {
  using Error::Error;
};

// Fixed-shape capacity too small for the graph.
struct SizingError : Error {
  SizingError(const std::string& what, std::size_t required)
      : Error(what), required_capacity(required) {}
  std::size_t required_capacity;
};

// Malformed document; carries a human-readable location.
struct ParseError : Error {
  ParseError(const std::string& what, std::string where)
      : Error(what + " (at " + where + ")"), location(std::move(where)) {}
  std::string location;
};

// API called out of contract (step after done, empty batch, ...).
struct UsageError : Error {
  using Error::Error;
};

// Pre-flight memory estimate over budget.
struct ResourceBudgetError : Error {
  ResourceBudgetError(const std::string& what, std::uint64_t need, std::uint64_t budget)
      : Error(what), required_bytes(need), budget_bytes(budget) {}
  std::uint64_t required_bytes;
  std::uint64_t budget_bytes;
};

struct IoError : Error {
  using Error::Error;
};

/// UTC instant with microsecond resolution.
struct UtcTime {
  std::int64_t micros = 0;  // since 1970-01-01T00:00:00Z

  friend auto operator<=>(const UtcTime&, const UtcTime&) = default;

  double seconds_since(const UtcTime& earlier) const {
    return static_cast<double>(micros - earlier.micros) / 1e6;
  }
};

/// Accepts "YYYY-MM-DD HH:MM:SS[.ffffff]" with optional 'T' separator and a
/// trailing 'Z' or "+00:00". Naive timestamps are UTC. Fractions beyond
/// microseconds are truncated.
std::optional<UtcTime> parse_utc_time(std::string_view text);

/// "YYYY-MM-DD HH:MM:SS.ffffff" (always six fractional digits).
std::string format_utc_time(UtcTime t);

}  // namespace procgraph
