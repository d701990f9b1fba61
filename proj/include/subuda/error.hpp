#pragma once

#include <stdexcept>
#include <string>

namespace subuda {

// Dimension mismatches between arrays that should agree.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Invalid argument values (unnormalized proportions, lambda out of range, ...).
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Operation not meaningful in the current state (no centroids present, empty window, ...).
struct StateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API misuse (mismatched caches, mixed iteration stamps, ...).
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

// Unknown names (presets, variants).
struct LookupError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

}  // namespace subuda
