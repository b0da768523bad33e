#pragma once

#include <stdexcept>
#include <string>

namespace srn {

/// Shape or extent mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Index outside the valid range (labels, embedding rows, time steps).
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Invalid configuration value or inconsistent module widths.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Caller violated an operation's precondition (non-scalar loss, empty mask row).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Bad user-supplied data: words that do not fit, empty lexicons, odd image sizes.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Unreadable or corrupt files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace srn
