#pragma once

#include <stdexcept>
#include <string>

namespace spikemix {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape/dimension mismatches in tensor math.
struct ShapeError : Error {
  using Error::Error;
};

// Bad configuration, CLI arguments, or dataset/file contents that parse but
// violate a contract (unknown key, label out of range, unfolded model, ...).
struct ConfigError : Error {
  using Error::Error;
};

// Filesystem and serialization failures (missing file, bad magic, truncation).
struct IoError : Error {
  using Error::Error;
};

// NaN/Inf encountered where finite values are required.
struct NumericError : Error {
  using Error::Error;
};

// backward() invoked twice on the same recorded tape.
struct StaleTapeError : Error {
  using Error::Error;
};

}  // namespace spikemix
