#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace biasner {

// Error families. The CLI maps each one to its own exit code and the HTTP
// service maps them to machine-readable error codes.
enum class ErrorKind {
  kConfig,      // bad configuration or column mapping
  kIngest,      // unreadable input rows
  kParse,       // malformed CoNLL or JSON payloads
  kContract,    // violated preconditions
  kValidation,  // malformed tag sequences, out-of-range scores
  kLoad,        // checkpoint version/checksum/shape problems
  kNumeric,     // non-finite values in the model
  kSplit,       // corpus too small to partition
  kState,       // loop state conflicts (stale versions, idempotency)
  kIo,
};

std::string_view error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorKind::kContract, what);
}

}  // namespace biasner
