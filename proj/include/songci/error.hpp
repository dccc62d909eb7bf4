#pragma once

#include <stdexcept>
#include <string>

namespace songci {

// Three failure classes, mapped one-to-one onto the CLI exit codes 1/2/3.
class UsageError : public std::runtime_error {
 public:
  UsageError(const std::string& module, const std::string& what)
      : std::runtime_error(module + ": " + what) {}
};

class DataError : public std::runtime_error {
 public:
  DataError(const std::string& module, const std::string& what)
      : std::runtime_error(module + ": " + what) {}
};

class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& module, const std::string& what)
      : std::runtime_error(module + ": " + what) {}
};

}  // namespace songci
