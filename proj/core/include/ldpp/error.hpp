#pragma once

#include <stdexcept>
#include <string>

namespace ldpp {

// Bad inputs, schema violations, out-of-range config values. CLI exit code 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// I/O failures, lock conflicts, transport errors, non-finite losses. CLI exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  explicit RuntimeFailure(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ldpp
