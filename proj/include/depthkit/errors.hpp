#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace depthkit {

enum class ErrorCode {
  AllInvalid,
  BadFactor,
  BehindCamera,
  NonPositiveDepth,
  Degenerate,
  BadConfig,
  DimensionMismatch,
  ShapeMismatch,
  BadIndices,
  NotScalarLoss,
  NonFinite,
  NoValidPixels,
  DivisionHazard,
  UnknownExperiment,
  MissingMask,
  EmptyDataset,
  NonFiniteLoss,
  Io,
  Parse,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; `code()` is what callers branch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace depthkit
