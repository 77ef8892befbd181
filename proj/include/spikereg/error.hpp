#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace spikereg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible shapes, invalid architecture fields, bad hyperparameters.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

// API called out of contract (non-scalar backward root, empty spike list, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

// Vanishing norms, degenerate statistics, non-finite losses.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Bad labels or corrupt records.
class DataError : public Error {
 public:
  using Error::Error;
};

// Byte layout of an input file is wrong.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

template <typename Extent>
std::string shape_string(const std::vector<Extent>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

}  // namespace spikereg
