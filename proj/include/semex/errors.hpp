#pragma once

#include <stdexcept>
#include <string>

namespace semex {

/// Scene parameters admit no valid placement (too many objects, or the
/// requested wall density could not be reached with connected free space).
class GenerationInfeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or schema-violating configuration / input document.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or gradient during learning.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace semex
