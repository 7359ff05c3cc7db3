#pragma once

#include <stdexcept>

namespace rlseg {

// Bad configuration, unusable arguments, or violated value contracts.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem failures: missing paths, unwritable outputs, short reads.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Structurally invalid file contents (bad magic, bad header fields, ...).
struct FormatError : IoError {
  using IoError::IoError;
};

// Dimension mismatch between grids, parameter sets, or configs.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace rlseg
