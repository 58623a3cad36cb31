#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace prosody {

// Base error for everything the toolkit can reject at runtime.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numeric failure (non-finite loss or gradient); maps to a distinct CLI
// exit code.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Builds a message from stream-able pieces.
template <class... Parts>
std::string cat(Parts&&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  return os.str();
}

template <class... Parts>
[[noreturn]] void fail(Parts&&... parts) {
  throw Error(cat(std::forward<Parts>(parts)...));
}

}  // namespace prosody
