#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace harness {

enum class ErrorCode {
  InvalidArgument,
  NegativeWeight,
  NotStochastic,
  NonZeroMean,
  DegenerateSpan,
  InvalidParams,
  NegativeArgument,
  InfiniteVariance,
  NegativeStart,
  NoiseRowMismatch,
  TooLarge,
  StepUnderflow,
  InvalidGamma,
  UnsupportedCase,
  DegenerateDesign,
  InsufficientPoints,
  ConfigError,
};

inline constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NegativeWeight: return "NegativeWeight";
    case ErrorCode::NotStochastic: return "NotStochastic";
    case ErrorCode::NonZeroMean: return "NonZeroMean";
    case ErrorCode::DegenerateSpan: return "DegenerateSpan";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::NegativeArgument: return "NegativeArgument";
    case ErrorCode::InfiniteVariance: return "InfiniteVariance";
    case ErrorCode::NegativeStart: return "NegativeStart";
    case ErrorCode::NoiseRowMismatch: return "NoiseRowMismatch";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::StepUnderflow: return "StepUnderflow";
    case ErrorCode::InvalidGamma: return "InvalidGamma";
    case ErrorCode::UnsupportedCase: return "UnsupportedCase";
    case ErrorCode::DegenerateDesign: return "DegenerateDesign";
    case ErrorCode::InsufficientPoints: return "InsufficientPoints";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above; the
/// message is prefixed with the code name so CLI output stays greppable.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Configuration problem tied to a specific key (e.g. "experiment.noise").
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(ErrorCode::ConfigError, key + ": " + what), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace harness
