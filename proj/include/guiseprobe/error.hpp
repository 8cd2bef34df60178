#pragma once

#include <stdexcept>
#include <string>

namespace guiseprobe {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input file.
class LoadError : public Error {
 public:
  using Error::Error;
};

// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// The backend cannot perform the requested kind of scoring.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// Network or server failure talking to a remote backend. Retryable.
class TransportError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace guiseprobe
