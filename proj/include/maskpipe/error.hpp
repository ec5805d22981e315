#pragma once

#include <stdexcept>
#include <string>

namespace maskpipe {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for unreadable/unwritable files and malformed on-disk formats.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace maskpipe
