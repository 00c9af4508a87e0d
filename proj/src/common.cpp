#include "belief/common.hpp"

namespace belief {

const char *to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::NonSymmetricCovariance: return "NonSymmetricCovariance";
    case ErrorCode::OpacityOutOfRange: return "OpacityOutOfRange";
    case ErrorCode::InvalidEmbedding: return "InvalidEmbedding";
    case ErrorCode::EmptyObservation: return "EmptyObservation";
    case ErrorCode::OriginMismatch: return "OriginMismatch";
    case ErrorCode::NoValidOverlap: return "NoValidOverlap";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::TauOutOfRange: return "TauOutOfRange";
    case ErrorCode::InvalidSchedule: return "InvalidSchedule";
    case ErrorCode::EmptyPatchSet: return "EmptyPatchSet";
    case ErrorCode::CenterOutOfBounds: return "CenterOutOfBounds";
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::UntrainedDenoiser: return "UntrainedDenoiser";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::EmptyLabel: return "EmptyLabel";
    case ErrorCode::ServiceUnavailable: return "ServiceUnavailable";
    case ErrorCode::GenerationFailed: return "GenerationFailed";
    case ErrorCode::PoseOutOfBounds: return "PoseOutOfBounds";
    case ErrorCode::UnknownTarget: return "UnknownTarget";
    case ErrorCode::NoFrontier: return "NoFrontier";
    case ErrorCode::EmptyResultSet: return "EmptyResultSet";
    case ErrorCode::InvalidVisibility: return "InvalidVisibility";
    case ErrorCode::VisibilityUnachievable: return "VisibilityUnachievable";
    case ErrorCode::TrajectoryNotClosed: return "TrajectoryNotClosed";
    case ErrorCode::NothingPredicted: return "NothingPredicted";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

} // namespace belief
