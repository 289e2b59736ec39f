#pragma once

#include <stdexcept>
#include <string>

namespace rw {

/// Library-wide exception. `code()` is a stable machine-readable identifier
/// (the server forwards it verbatim as the API error code).
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

namespace errc {
inline constexpr const char* kInvalidArgument = "invalid_argument";
inline constexpr const char* kMalformed = "malformed";
inline constexpr const char* kInvalidClassIndex = "invalid_class_index";
inline constexpr const char* kOverlappingSplits = "overlapping_splits";
inline constexpr const char* kDimensionMismatch = "dimension_mismatch";
inline constexpr const char* kUnknownSample = "unknown_sample";
inline constexpr const char* kDuplicateValidation = "duplicate_validation";
inline constexpr const char* kDegenerateWeights = "degenerate_weights";
inline constexpr const char* kNoQualityEvidence = "no_quality_evidence";
inline constexpr const char* kDegenerateWeightMass = "degenerate_weight_mass";
inline constexpr const char* kNumerical = "numerical_failure";
inline constexpr const char* kNothingToUndo = "nothing_to_undo";
inline constexpr const char* kVersionMismatch = "version_mismatch";
inline constexpr const char* kIo = "io_error";
inline constexpr const char* kNoSnapshot = "no_snapshot";
inline constexpr const char* kNotFound = "not_found";
inline constexpr const char* kPayloadTooLarge = "payload_too_large";
inline constexpr const char* kInternal = "internal_error";
}  // namespace errc

}  // namespace rw
