#include "spinemorph/error.hpp"

namespace spinemorph {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::kFileNotFound: return "file-not-found";
        case ErrorCode::kParseError: return "parse-error";
        case ErrorCode::kDegenerateMesh: return "degenerate-mesh";
        case ErrorCode::kDegenerateGeometry: return "degenerate-geometry";
        case ErrorCode::kIoError: return "io-error";
        case ErrorCode::kInvalidArgument: return "invalid-argument";
        case ErrorCode::kTooFewPoints: return "too-few-points";
        case ErrorCode::kCoincidentPoints: return "coincident-points";
        case ErrorCode::kTooFewVertebrae: return "too-few-vertebrae";
        case ErrorCode::kDegenerateFrame: return "degenerate-frame";
        case ErrorCode::kInvalidManifest: return "invalid-manifest";
        case ErrorCode::kEmptyBody: return "empty-body";
        case ErrorCode::kEndplateNotFound: return "endplate-not-found";
        case ErrorCode::kNoIntersection: return "no-intersection";
        case ErrorCode::kInvalidSpec: return "invalid-spec";
        case ErrorCode::kLengthMismatch: return "length-mismatch";
        case ErrorCode::kEmptyInput: return "empty-input";
        case ErrorCode::kInsufficientData: return "insufficient-data";
        case ErrorCode::kNoOverlap: return "no-overlap";
        case ErrorCode::kSchemaError: return "schema-error";
    }
    return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace spinemorph
