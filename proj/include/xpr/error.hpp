#pragma once

#include <stdexcept>
#include <string>

namespace xpr {

enum class ErrorCode {
  SyntaxError,       // text does not match the query language grammar
  UnknownSymbol,     // program references a name the grammar does not know
  IllegalAction,     // action sequence violates the decoder mask
  CapacityExceeded,  // enumeration larger than the configured bound
  TypeError,         // operator/literal incompatible with a property type
  UnknownName,       // type/property/value token absent from the KB schema
  SpecError,         // invalid generation spec
  DivergenceError,   // non-finite loss during training
  Undefined,         // metric requested before its denominator is non-zero
  IoError,           // file read/write failure or malformed file
  ConfigError,       // inconsistent configuration (checkpoint mismatch etc.)
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::UnknownSymbol: return "UnknownSymbol";
    case ErrorCode::IllegalAction: return "IllegalAction";
    case ErrorCode::CapacityExceeded: return "CapacityExceeded";
    case ErrorCode::TypeError: return "TypeError";
    case ErrorCode::UnknownName: return "UnknownName";
    case ErrorCode::SpecError: return "SpecError";
    case ErrorCode::DivergenceError: return "DivergenceError";
    case ErrorCode::Undefined: return "Undefined";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  // SyntaxError carries the 0-based index of the first offending token.
  Error(ErrorCode code, const std::string& message, int token_index)
      : Error(code, message) {
    token_index_ = token_index;
  }

  ErrorCode code() const { return code_; }
  int token_index() const { return token_index_; }

 private:
  ErrorCode code_;
  int token_index_ = -1;
};

}  // namespace xpr
