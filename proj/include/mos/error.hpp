#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mos {

enum class ErrorCode {
  InvalidMatrix,
  SingularGram,
  InvalidBox,
  InvalidCostMatrix,
  ShapeMismatch,
  LayoutMismatch,
  BankFull,
  UpdateDue,
  UpdateNotDue,
  TrainingDiverged,
  ConfigError,
  IoError,
  BankNotReady,
  InvalidCheckpoint,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidMatrix: return "InvalidMatrix";
    case ErrorCode::SingularGram: return "SingularGram";
    case ErrorCode::InvalidBox: return "InvalidBox";
    case ErrorCode::InvalidCostMatrix: return "InvalidCostMatrix";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::LayoutMismatch: return "LayoutMismatch";
    case ErrorCode::BankFull: return "BankFull";
    case ErrorCode::UpdateDue: return "UpdateDue";
    case ErrorCode::UpdateNotDue: return "UpdateNotDue";
    case ErrorCode::TrainingDiverged: return "TrainingDiverged";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::BankNotReady: return "BankNotReady";
    case ErrorCode::InvalidCheckpoint: return "InvalidCheckpoint";
  }
  return "Unknown";
}

/// All library failures surface as this exception; `code()` identifies the
/// contract that was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mos
