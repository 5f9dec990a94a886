#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spinemorph {

enum class ErrorCode {
    kFileNotFound,
    kParseError,
    kDegenerateMesh,
    kDegenerateGeometry,
    kIoError,
    kInvalidArgument,
    kTooFewPoints,
    kCoincidentPoints,
    kTooFewVertebrae,
    kDegenerateFrame,
    kInvalidManifest,
    kEmptyBody,
    kEndplateNotFound,
    kNoIntersection,
    kInvalidSpec,
    kLengthMismatch,
    kEmptyInput,
    kInsufficientData,
    kNoOverlap,
    kSchemaError,
};

/// Stable kebab-case name, used in reports and CLI diagnostics.
std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace spinemorph
