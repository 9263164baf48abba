#pragma once

#include <stdexcept>

namespace rnnif {

// Failure taxonomy. Everything thrown by the library derives from Error so
// callers (in particular the CLI) can map categories onto exit codes.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Incompatible matrix/tensor dimensions. Message names both shapes.
class ShapeError : public Error {
public:
  using Error::Error;
};

// An argument value outside its contract (negative scale, mask not in {0,1},
// rate outside (0,1), ...).
class ValueError : public Error {
public:
  using Error::Error;
};

// An inconsistent model or run configuration (layer widths that do not chain,
// imputation layer not first, checkpoint/spec mismatch, ...).
class ConfigError : public Error {
public:
  using Error::Error;
};

// Malformed external input (CSV rows, profile files, model-spec grammar).
class ParseError : public Error {
public:
  using Error::Error;
};

// An operation invoked in the wrong mode, e.g. a backward pass without
// training-mode tapes.
class StateError : public Error {
public:
  using Error::Error;
};

// Non-finite values where the numeric contract requires finite ones.
class NumericError : public Error {
public:
  using Error::Error;
};

// Filesystem failures (unreadable/unwritable paths).
class IoError : public Error {
public:
  using Error::Error;
};

}  // namespace rnnif
