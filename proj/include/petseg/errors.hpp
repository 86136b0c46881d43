#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace petseg {

enum class ErrorCode {
  BadMagic,
  UnsupportedDatatype,
  EndiannessUndetectable,
  TruncatedData,
  DecompressFailure,
  IoFailure,
  LabelOverflow,
  InvalidSpacing,
  InvalidWindow,
  InvalidArgument,
  ShapeMismatch,
  ShapeError,
  NonFinite,
  EmptySplit,
  DivergedLoss,
  TooFewSamples,
  UnknownMaskName,
  UnknownGroupId,
  HotspotOutOfBounds,
  PredictorFailure,
};

std::string_view to_string(ErrorCode code);

// Coarse failure category, used by the CLI to pick an exit code.
enum class ErrorClass { Io, Validation, Predictor };
ErrorClass classify(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace petseg
