#pragma once

#include <stdexcept>
#include <string>

namespace derc {

// Error taxonomy mirrored by the CLI exit codes (see tools/).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Misuse of an in-process API (wrong shapes, non-scalar backward root, ...).
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when a metric is undefined on the given inputs, e.g. a PR curve
// over a single-class population.
struct MetricUndefinedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace derc
