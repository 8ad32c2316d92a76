#ifndef NSDEHAZE_ERROR_HPP
#define NSDEHAZE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace nsd {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Raised when a training loss goes non-finite; the message names the component.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace nsd

#endif  // NSDEHAZE_ERROR_HPP
