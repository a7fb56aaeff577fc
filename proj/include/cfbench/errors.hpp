#ifndef CFBENCH_ERRORS_HPP_
#define CFBENCH_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace cfbench {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A file could not be read or did not follow its format.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, long line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

// Input violated an operation's precondition (empty database, out-of-range
// vote, zero-voter item, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Data-level failure: unusable datasets, protocols that eliminate everybody.
class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace cfbench

#endif  // CFBENCH_ERRORS_HPP_
