#include "petseg/errors.hpp"

namespace petseg {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedDatatype: return "UnsupportedDatatype";
    case ErrorCode::EndiannessUndetectable: return "EndiannessUndetectable";
    case ErrorCode::TruncatedData: return "TruncatedData";
    case ErrorCode::DecompressFailure: return "DecompressFailure";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::LabelOverflow: return "LabelOverflow";
    case ErrorCode::InvalidSpacing: return "InvalidSpacing";
    case ErrorCode::InvalidWindow: return "InvalidWindow";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::UnknownMaskName: return "UnknownMaskName";
    case ErrorCode::UnknownGroupId: return "UnknownGroupId";
    case ErrorCode::HotspotOutOfBounds: return "HotspotOutOfBounds";
    case ErrorCode::PredictorFailure: return "PredictorFailure";
  }
  return "Unknown";
}

ErrorClass classify(ErrorCode code) {
  switch (code) {
    case ErrorCode::TruncatedData:
    case ErrorCode::DecompressFailure:
    case ErrorCode::IoFailure:
      return ErrorClass::Io;
    case ErrorCode::PredictorFailure:
      return ErrorClass::Predictor;
    default:
      return ErrorClass::Validation;
  }
}

}  // namespace petseg
