#pragma once

#include <stdexcept>
#include <string>

namespace dare {

enum class FormatErrorKind { bad_magic, version_mismatch, truncated, io, invalid };

const char* to_string(FormatErrorKind kind);

// Failure while reading or writing one of the binary containers.
class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  FormatErrorKind kind() const { return kind_; }

 private:
  FormatErrorKind kind_;
};

}  // namespace dare
