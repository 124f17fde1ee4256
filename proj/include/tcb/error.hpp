#pragma once

#include <stdexcept>
#include <string>

namespace tcb {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments or configuration. The CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or corrupted file / bitstream.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Training produced non-finite values. The CLI maps this to exit code 3.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace tcb
