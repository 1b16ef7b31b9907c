#pragma once

#include <stdexcept>
#include <string>

namespace apn {

// Tensor shapes that do not compose (channel mismatch, template larger than
// search, spatial mismatch in concat).
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid model / run configuration. The CLI maps this to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid annotation handed to label generation (zero-area box etc).
class LabelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// API misuse: out-of-range grid index, backward from a non-scalar, ...
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Tracker initialization with a degenerate or out-of-frame box.
class InitError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent input files (annotations, results, frames).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN / Inf where a finite number is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace apn
