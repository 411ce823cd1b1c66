#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace distloss {

enum class ErrorCode {
  InvalidBinWidth,
  EmptyRange,
  InvalidLabel,
  EmptyDataset,
  InvalidBandwidth,
  InvalidSampleCount,
  FrequencySumMismatch,
  InvalidFrequency,
  EmptySample,
  InvalidInput,
  ShapeMismatch,
  InvalidWeight,
  InvalidTape,
  NonFiniteGradient,
  InvalidSpec,
  ParseError,
  EmptyRegion,
  EmptyHistogram,
  UnsupportedFormat,
  ConfigError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidBinWidth: return "InvalidBinWidth";
    case ErrorCode::EmptyRange: return "EmptyRange";
    case ErrorCode::InvalidLabel: return "InvalidLabel";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::InvalidBandwidth: return "InvalidBandwidth";
    case ErrorCode::InvalidSampleCount: return "InvalidSampleCount";
    case ErrorCode::FrequencySumMismatch: return "FrequencySumMismatch";
    case ErrorCode::InvalidFrequency: return "InvalidFrequency";
    case ErrorCode::EmptySample: return "EmptySample";
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidWeight: return "InvalidWeight";
    case ErrorCode::InvalidTape: return "InvalidTape";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyRegion: return "EmptyRegion";
    case ErrorCode::EmptyHistogram: return "EmptyHistogram";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

//! Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace distloss
