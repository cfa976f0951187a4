#include "depthkit/errors.hpp"

namespace depthkit {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::AllInvalid: return "AllInvalid";
    case ErrorCode::BadFactor: return "BadFactor";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::Degenerate: return "Degenerate";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::BadIndices: return "BadIndices";
    case ErrorCode::NotScalarLoss: return "NotScalarLoss";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::NoValidPixels: return "NoValidPixels";
    case ErrorCode::DivisionHazard: return "DivisionHazard";
    case ErrorCode::UnknownExperiment: return "UnknownExperiment";
    case ErrorCode::MissingMask: return "MissingMask";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Parse: return "Parse";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace depthkit
