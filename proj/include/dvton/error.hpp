#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dvton {

// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kInvalidArgument,  // precondition violated by the caller
  kShapeMismatch,    // extents / channel counts disagree
  kIo,               // missing or unreadable/unwritable file
  kFormat,           // malformed file contents (manifest, archive, config)
  kNumeric,          // non-finite value produced or consumed
  kCheckpoint,       // archive does not match the requested configuration
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace dvton
