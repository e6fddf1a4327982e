#pragma once

#include <stdexcept>
#include <string>

namespace vrel {

/// Malformed or out-of-domain input to a library routine.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Not enough samples for the requested model size.
class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File content, schema or cross-reference problem. Carries file/line context in the message.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A scoring query whose categories disagree with the scored pair.
class QueryMismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The bag constraints admit no assignment.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vrel
