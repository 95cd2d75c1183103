#pragma once

#include <stdexcept>

namespace spectra {

// Dimension or channel-count mismatch between operands.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input outside an operation's domain (out-of-range sample, degenerate range,
// empty database, ...).
struct ValueError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed file or config contents.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem-level failure.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite value where training cannot continue.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace spectra
