#pragma once

#include <stdexcept>
#include <string>

namespace textgcn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller passed an argument outside the operation's domain.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input files.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// A matrix or graph violates its structural invariants.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// An internal precondition between paired calls was broken
/// (e.g. backward() on a cache from a different forward()).
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace textgcn
