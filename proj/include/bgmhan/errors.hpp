#pragma once

#include <stdexcept>
#include <string>

namespace bgmhan {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shapes that do not line up (matmul inner dims, grad vs. value, ...).
struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

// A caller violated an operation's precondition.
struct ContractError : Error {
  explicit ContractError(const std::string& msg) : Error("contract error: " + msg) {}
};

// Invalid configuration value, detected before any work starts.
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

// Malformed input file; message carries the line number where known.
struct ParseError : Error {
  explicit ParseError(const std::string& msg) : Error("parse error: " + msg) {}
};

// Training could not proceed (degenerate data, divergence, ...).
struct TrainError : Error {
  explicit TrainError(const std::string& msg) : Error("training error: " + msg) {}
};

// A dataset cannot be split as requested (class too small for a stratum).
struct SplitError : Error {
  explicit SplitError(const std::string& msg) : Error("split error: " + msg) {}
};

// Filesystem-level failure (missing file, unwritable path).
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

}  // namespace bgmhan
