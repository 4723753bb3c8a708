#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spluad {

enum class ErrorCode {
  dimension,
  config,
  parameter,
  degenerate_input,
  input,
  internal,
  io,
  loader,
  split,
  numeric,
};

inline std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::dimension: return "E_DIMENSION";
    case ErrorCode::config: return "E_CONFIG";
    case ErrorCode::parameter: return "E_PARAMETER";
    case ErrorCode::degenerate_input: return "E_DEGENERATE";
    case ErrorCode::input: return "E_INPUT";
    case ErrorCode::internal: return "E_INTERNAL";
    case ErrorCode::io: return "E_IO";
    case ErrorCode::loader: return "E_LOADER";
    case ErrorCode::split: return "E_SPLIT";
    case ErrorCode::numeric: return "E_NUMERIC";
  }
  return "E_UNKNOWN";
}

// All library failures surface as Error; code() is what the CLI prints as
// its machine-parseable prefix.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace spluad
