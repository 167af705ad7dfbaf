#pragma once

#include <stdexcept>
#include <string>

namespace notecode {

// I/O failures: missing files, unreadable streams, short writes.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input table is missing a required column or is otherwise malformed.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A cell or record could not be parsed; message carries the row number.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration value or incompatible model settings.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Semantically invalid data: empty corpus, label out of range, etc.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Array dimensions do not line up.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Index outside the valid range (vocabulary id, embedding row, ...).
struct IndexError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace notecode
