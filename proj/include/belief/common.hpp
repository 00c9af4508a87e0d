#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace belief {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;

using Rng = std::mt19937_64;

enum class ErrorCode {
    NonSymmetricCovariance,
    OpacityOutOfRange,
    InvalidEmbedding,
    EmptyObservation,
    OriginMismatch,
    NoValidOverlap,
    ShapeMismatch,
    TauOutOfRange,
    InvalidSchedule,
    EmptyPatchSet,
    CenterOutOfBounds,
    EmptyGrid,
    UntrainedDenoiser,
    InsufficientData,
    EmptyLabel,
    ServiceUnavailable,
    GenerationFailed,
    PoseOutOfBounds,
    UnknownTarget,
    NoFrontier,
    EmptyResultSet,
    InvalidVisibility,
    VisibilityUnachievable,
    TrajectoryNotClosed,
    NothingPredicted,
    ParseError,
    ValidationError,
    IoError,
    FormatError,
    InvalidArgument,
};

const char *to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and tests) can branch on the kind without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string &message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), mCode(code) {}

    ErrorCode code() const noexcept { return mCode; }

private:
    ErrorCode mCode;
};

/// SplitMix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return mix_seed(seed ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace belief
