#pragma once

#include <stdexcept>
#include <string>

namespace medttt {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Mismatched or invalid tensor/array extents.
struct ShapeError : Error {
  using Error::Error;
};

// Value outside an operation's mathematical domain (log of a negative, ...).
struct DomainError : Error {
  using Error::Error;
};

// Invalid configuration (bad cutoff ratio, unknown ablation name, ...).
struct ConfigError : Error {
  using Error::Error;
};

// NaN/Inf surfaced where all values must stay finite.
struct NumericError : Error {
  using Error::Error;
};

// Malformed input file (netpbm header, manifest, checkpoint, ...).
struct ParseError : Error {
  using Error::Error;
};

// Filesystem failure.
struct IoError : Error {
  using Error::Error;
};

// Empty split, missing files, inconsistent manifest.
struct DataError : Error {
  using Error::Error;
};

// API contract violation (non-scalar loss, double backward, ...).
struct ContractError : Error {
  using Error::Error;
};

}  // namespace medttt
