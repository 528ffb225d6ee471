#pragma once

#include <stdexcept>
#include <string>

namespace hir {

// Bad arguments or configuration. The CLI maps this to exit status 1.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed, missing or inconsistent input data. The CLI maps this to exit status 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class TruncationError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace hir
